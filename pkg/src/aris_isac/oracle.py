"""Independent checks of the closed forms and the solvers.

Nothing here reuses the operator code under test: the Monte-Carlo estimators
simulate the received signals symbol by symbol, the grid search evaluates the
signal model directly, and the surrogate checks rebuild every Kronecker operator
densely with ``np.kron``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import numpy as np

from .model import ChannelSet, DesignSolution, SystemConfig, check_feasibility, crandn, radar_snr
from .receive_filter import optimal_filter


@dataclass(frozen=True)
class McConfig:
    n_samples: int = 1_000_000
    seed: int = 0
    batch: int = 100_000

    def __post_init__(self):
        if self.n_samples < 1000:
            raise ValueError("n_samples must be >= 1000")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")


@dataclass(frozen=True)
class McEstimate:
    value: float
    se: float
    n: int

    def agrees(self, exact: float, n_se: float = 3.0) -> bool:
        return bool(abs(self.value - exact) <= n_se * self.se)


class _RatioAccumulator:
    """Streaming sums for a ratio-of-means estimate with a delta-method error."""

    def __init__(self):
        self.n = 0
        self.sa = self.sb = self.saa = self.sbb = self.sab = 0.0

    def add(self, a: np.ndarray, b: np.ndarray):
        self.n += a.size
        self.sa += a.sum()
        self.sb += b.sum()
        self.saa += (a * a).sum()
        self.sbb += (b * b).sum()
        self.sab += (a * b).sum()

    def ratio(self) -> McEstimate:
        n = self.n
        ma, mb = self.sa / n, self.sb / n
        if mb == 0:
            return McEstimate(0.0 if ma == 0 else np.inf, 0.0, n)
        va = self.saa / n - ma ** 2
        vb = self.sbb / n - mb ** 2
        cab = self.sab / n - ma * mb
        r = ma / mb
        var = (va - 2 * r * cab + r * r * vb) / (mb * mb * n)
        return McEstimate(float(r), float(np.sqrt(max(var, 0.0))), n)

    def mean(self) -> McEstimate:
        n = self.n
        m = self.sa / n
        v = self.saa / n - m * m
        return McEstimate(float(m), float(np.sqrt(max(v, 0.0) / n)), n)


def _batches(mc: McConfig):
    left = mc.n_samples
    while left > 0:
        b = min(mc.batch, left)
        left -= b
        yield b


def mc_user_sinr(cfg: SystemConfig, ch: ChannelSet, w_mat: np.ndarray, phi: np.ndarray, k: int,
                 mc: McConfig = McConfig()) -> McEstimate:
    """Simulate ``y_k = h_k^T W s + h_rk^T Phi z0 + n_k`` and compare powers."""
    rng = np.random.default_rng(mc.seed)
    hd, hr, g = ch.h_d[k], ch.h_r[k], ch.g_mat
    acc = _RatioAccumulator()
    for b in _batches(mc):
        s = crandn(rng, w_mat.shape[1], b)
        z0 = np.sqrt(cfg.sigma2_z) * crandn(rng, cfg.n_ris, b)
        nk = np.sqrt(cfg.sigma2_user[k]) * crandn(rng, b)
        x = w_mat @ s
        at_ris = phi[:, None] * (g @ x + z0)     # amplified forward reflection
        y = hd @ x + hr @ at_ris + nk
        desired = (hd + (hr * phi) @ g) @ w_mat[:, k] * s[k]
        acc.add(np.abs(desired) ** 2, np.abs(y - desired) ** 2)
    return acc.ratio()


def mc_radar_snr(cfg: SystemConfig, ch: ChannelSet, w_mat: np.ndarray, phi: np.ndarray,
                 u: np.ndarray, mc: McConfig = McConfig()) -> McEstimate:
    """Simulate the two-hop echo through the RIS and filter it with ``u``."""
    rng = np.random.default_rng(mc.seed)
    g, h_rt = ch.g_mat, ch.h_rt
    uc = np.asarray(u, dtype=complex).conj()
    acc = _RatioAccumulator()
    for b in _batches(mc):
        s = crandn(rng, w_mat.shape[1], b)
        z0 = np.sqrt(cfg.sigma2_z) * crandn(rng, cfg.n_ris, b)
        z1 = np.sqrt(cfg.sigma2_z) * crandn(rng, cfg.n_ris, b)
        nr = np.sqrt(cfg.sigma2_r) * crandn(rng, cfg.n_bs, b)
        beta = np.sqrt(cfg.rcs_var) * crandn(rng, b)
        x = w_mat @ s
        fwd_sig = phi[:, None] * (g @ x)
        fwd_noise = phi[:, None] * z0
        # at the target, reflected, amplified again at the RIS, back to the BS
        echo_sig = g.T @ (phi[:, None] * (h_rt[:, None] * (beta * (h_rt @ fwd_sig))))
        echo_noise = g.T @ (phi[:, None] * (h_rt[:, None] * (beta * (h_rt @ fwd_noise)) + z1))
        sig = uc @ echo_sig
        noise = uc @ (echo_noise + nr)
        acc.add(np.abs(sig) ** 2, np.abs(noise) ** 2)
    return acc.ratio()


def mc_ris_power(cfg: SystemConfig, ch: ChannelSet, w_mat: np.ndarray, phi: np.ndarray,
                 mc: McConfig = McConfig()) -> McEstimate:
    """Average power leaving the RIS amplifiers over both passes."""
    rng = np.random.default_rng(mc.seed)
    g, h_rt = ch.g_mat, ch.h_rt
    acc = _RatioAccumulator()
    for b in _batches(mc):
        s = crandn(rng, w_mat.shape[1], b)
        z0 = np.sqrt(cfg.sigma2_z) * crandn(rng, cfg.n_ris, b)
        z1 = np.sqrt(cfg.sigma2_z) * crandn(rng, cfg.n_ris, b)
        beta = np.sqrt(cfg.rcs_var) * crandn(rng, b)
        first = phi[:, None] * (g @ (w_mat @ s) + z0)
        second = phi[:, None] * (h_rt[:, None] * (beta * (h_rt @ first)) + z1)
        p = np.sum(np.abs(first) ** 2, axis=0) + np.sum(np.abs(second) ** 2, axis=0)
        acc.add(p, np.ones_like(p))
    return acc.mean()


# ---------------------------------------------------------------- grid search

@dataclass(frozen=True)
class GridSpec:
    n_phases: int = 64
    n_amps: int = 8
    chunk: int = 65536


def _grid_metrics(cfg, ch, w_mat, u, phis):
    """Radar SNR, RIS power and user SINRs for a batch of reflection vectors (rows)."""
    g, h_rt = ch.g_mat, ch.h_rt
    a = phis * h_rt[None, :]                       # Phi h_rt
    v = a @ g                                      # rows: (G^T Phi h_rt)^T
    uv = v @ u.conj()                              # u^H v
    vw = v @ w_mat                                 # v^T W
    num = cfg.rcs_var * np.abs(uv) ** 2 * np.sum(np.abs(vw) ** 2, axis=1)
    na2 = np.sum(np.abs(a) ** 2, axis=1)
    gu = g.conj() @ u                              # G^* u
    den = (cfg.rcs_var * cfg.sigma2_z * np.abs(uv) ** 2 * na2
           + cfg.sigma2_z * np.sum(np.abs(phis) ** 2 * np.abs(gu)[None, :] ** 2, axis=1)
           + cfg.sigma2_r * np.real(np.vdot(u, u)))
    gw = g @ w_mat
    power = (np.sum(np.abs(phis) ** 2 @ np.abs(gw) ** 2, axis=1)
             + cfg.rcs_var * na2 * np.sum(np.abs(a @ gw) ** 2, axis=1)
             + cfg.rcs_var * cfg.sigma2_z * na2 ** 2
             + 2 * cfg.sigma2_z * np.sum(np.abs(phis) ** 2, axis=1))
    sinr = np.empty((phis.shape[0], cfg.n_users))
    for k in range(cfg.n_users):
        hk = ch.h_d[k][None, :] + (phis * ch.h_r[k][None, :]) @ g
        gains = np.abs(hk @ w_mat) ** 2
        ris_noise = cfg.sigma2_z * np.sum(np.abs(phis * ch.h_r[k][None, :]) ** 2, axis=1)
        sinr[:, k] = gains[:, k] / (gains.sum(axis=1) - gains[:, k] + ris_noise + cfg.sigma2_user[k])
    return num / den, power, sinr


def grid_best_phi(cfg: SystemConfig, ch: ChannelSet, w_mat: np.ndarray, u: np.ndarray,
                  grid: GridSpec = GridSpec()) -> tuple[np.ndarray, float]:
    """Exhaustive search over per-element amplitude x phase grids (``M <= 3``)."""
    if cfg.n_ris > 3:
        raise ValueError("grid search is limited to at most 3 RIS elements")
    amps = cfg.a_max * np.arange(1, grid.n_amps + 1) / grid.n_amps
    phases = np.exp(2j * np.pi * np.arange(grid.n_phases) / grid.n_phases)
    levels = (amps[:, None] * phases[None, :]).ravel()
    best_val, best_phi = -np.inf, None
    total = levels.size ** cfg.n_ris
    for start in range(0, total, grid.chunk):
        flat = np.arange(start, min(start + grid.chunk, total))
        idx = np.stack(np.unravel_index(flat, (levels.size,) * cfg.n_ris), axis=1)
        phis = levels[idx]
        snr, power, sinr = _grid_metrics(cfg, ch, w_mat, u, phis)
        ok = (power <= cfg.p_ris) & np.all(sinr >= cfg.gamma_targets[None, :], axis=1)
        if np.any(ok):
            j = int(np.argmax(np.where(ok, snr, -np.inf)))
            if snr[j] > best_val:
                best_val, best_phi = float(snr[j]), phis[j].copy()
    if best_phi is None:
        raise ValueError("no feasible point on the grid")
    return best_phi, best_val


# ------------------------------------------------------- local optimality check

@dataclass
class CertificateReport:
    improving_fraction: float
    n_perturb: int
    best_gain: float
    mean_shrink: float
    gains: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))


def local_opt_certificate(cfg: SystemConfig, ch: ChannelSet, sol: DesignSolution, n_perturb: int = 1000,
                          radius: float = 1e-3, seed: int = 0, rel_improve: float = 1e-4,
                          max_shrink: int = 30) -> CertificateReport:
    """Random feasible perturbations of ``(W, phi)``, each scored with its optimal filter.

    Perturbations have relative size ``radius`` (w.r.t. ``||W||`` and ``a_max``);
    infeasible draws are shrunk by halving until they are feasible.
    """
    rng = np.random.default_rng(seed)
    base_u = optimal_filter(cfg, ch, sol.w_mat, sol.phi)
    base = radar_snr(cfg, ch, sol.w_mat, sol.phi, base_u)
    wn = np.linalg.norm(sol.w_mat)
    gains = np.zeros(n_perturb)
    shrinks = np.zeros(n_perturb)
    for i in range(n_perturb):
        dw = crandn(rng, *sol.w_mat.shape)
        dphi = crandn(rng, cfg.n_ris)
        dw *= radius * wn / np.linalg.norm(dw)
        dphi *= radius * cfg.a_max / np.linalg.norm(dphi)
        for j in range(max_shrink + 1):
            w, phi = sol.w_mat + dw, sol.phi + dphi
            if check_feasibility(cfg, ch, w, phi, tol=1e-9).feasible:
                break
            dw, dphi = dw / 2, dphi / 2
        else:
            w, phi = sol.w_mat, sol.phi
        shrinks[i] = j
        u = optimal_filter(cfg, ch, w, phi)
        gains[i] = radar_snr(cfg, ch, w, phi, u) / base - 1.0
    frac = float(np.mean(gains > rel_improve)) if n_perturb else 0.0
    return CertificateReport(frac, n_perturb, float(gains.max(initial=0.0)), float(shrinks.mean()) if n_perturb else 0.0,
                             gains)


# ------------------------------------------------------- surrogate verification

def _dense_ops(cfg: SystemConfig, ch: ChannelSet, w_mat: np.ndarray, u: np.ndarray):
    """Dense ``C, D, E, J, K`` built straight from the channel definitions."""
    g_t = ch.g_mat.T @ np.diag(ch.h_rt)
    wg = w_mat.T @ g_t
    m_c = wg.conj().T @ wg
    b_u = g_t.conj().T @ np.outer(u, u.conj()) @ g_t
    jt = np.diag(np.abs(ch.h_rt) ** 2)
    c = cfg.rcs_var * np.kron(m_c, b_u)
    d = cfg.rcs_var * cfg.sigma2_z * np.kron(jt, b_u)
    gu = ch.g_mat.conj() @ u
    e = cfg.sigma2_z * np.diag(np.abs(gu) ** 2)
    j = cfg.rcs_var * np.kron(m_c + cfg.sigma2_z * jt, jt)
    gw = ch.g_mat @ w_mat
    k = np.diag(np.sum(np.abs(gw) ** 2, axis=1)) + 2 * cfg.sigma2_z * np.eye(cfg.n_ris)
    return c, d, e, j, k


def _embed(mat):
    return np.block([[mat.real, mat.imag], [mat.imag, -mat.real]])


def _two_stage(op, x_s, phi_s, m, a_max, clamp):
    """Both majorization stages of ``x^H op x`` built densely; returns callables per link."""
    lam = float(np.linalg.eigvalsh(op)[-1])
    if clamp:
        lam = max(lam, 0.0)
    lin = 2 * (op - lam * np.eye(op.shape[0])) @ x_s
    const1 = float(np.real(x_s.conj() @ (lam * np.eye(op.shape[0]) - op) @ x_s))
    fb = _embed(lin.reshape(m, m))
    hess = fb + fb.T
    lam2 = float(np.linalg.eigvalsh(hess)[-1])
    pb = np.concatenate([phi_s.real, phi_s.imag])
    r = (hess - lam2 * np.eye(2 * m)) @ pb
    lin2 = r[:m] + 1j * r[m:]
    const2 = -float(pb @ fb.T @ pb) + 0.5 * lam2 * float(pb @ pb)
    return {
        "lam": lam, "lam2": lam2, "lin": lin, "lin2": lin2, "const1": const1, "const2": const2,
        "quartic": lambda x: float(np.real(x.conj() @ op @ x)),
        "stage1": lambda x: lam * float(np.real(np.vdot(x, x))) + float(np.real(np.vdot(lin, x))) + const1,
        "stage1_box": lambda x: lam * m ** 2 * a_max ** 4 + float(np.real(np.vdot(lin, x))) + const1,
        "linear": lambda x: float(np.real(np.vdot(lin, x))),
        "stage2": lambda p: 0.5 * lam2 * float(np.real(np.vdot(p, p))) + float(np.real(np.vdot(lin2, p))) + const2,
    }


def random_box_points(rng, m: int, a_max: float, n: int) -> np.ndarray:
    """Uniform points in the product of complex discs of radius ``a_max``."""
    r = a_max * np.sqrt(rng.uniform(size=(n, m)))
    return r * np.exp(2j * np.pi * rng.uniform(size=(n, m)))


def surrogate_chain_slacks(cfg: SystemConfig, ch: ChannelSet, w_mat: np.ndarray, u: np.ndarray,
                           phi_s: np.ndarray, varpi: float, samples: np.ndarray, surrogate=None) -> dict:
    """Smallest relative slack of every majorization link over the sample points.

    A link ``lhs <= rhs`` contributes ``(rhs - lhs) / max(|lhs|, |rhs|)``; a
    negative value means the bound failed. If ``surrogate`` (the solver's
    :class:`PhiSurrogate`) is given, its final objective and power bounds are
    checked as well.
    """
    m = cfg.n_ris
    c, d, e, j, k = _dense_ops(cfg, ch, w_mat, u)
    f_op = varpi * d - c
    x_s = np.kron(phi_s, phi_s)
    obj = _two_stage(f_op, x_s, phi_s, m, cfg.a_max, clamp=True)
    pwr = _two_stage(j, x_s, phi_s, m, cfg.a_max, clamp=False)
    lam_j = float(np.real(np.trace(j)))
    # the power side uses the trace instead of the largest eigenvalue
    lin_tr = 2 * (j - lam_j * np.eye(m * m)) @ x_s
    c4_tr = float(np.real(x_s.conj() @ (lam_j * np.eye(m * m) - j) @ x_s))
    fb = _embed(lin_tr.reshape(m, m))
    lam_p = float(np.linalg.eigvalsh(fb + fb.T)[-1])
    pb_s = np.concatenate([phi_s.real, phi_s.imag])
    r = (fb + fb.T - lam_p * np.eye(2 * m)) @ pb_s
    p_tilde = r[:m] + 1j * r[m:]
    c5 = -float(pb_s @ fb.T @ pb_s) + 0.5 * lam_p * float(pb_s @ pb_s)

    def rel(lhs, rhs):
        return (rhs - lhs) / max(abs(lhs), abs(rhs), 1e-300)

    s_ur = cfg.sigma2_r * float(np.real(np.vdot(u, u)))
    out = {key: np.inf for key in ("majorize_quartic", "box_bound", "hessian_bound", "objective",
                                   "power_majorize", "power_hessian", "power_bound",
                                   "solver_objective", "solver_power")}
    for phi in samples:
        x = np.kron(phi, phi)
        ph2 = float(np.real(np.vdot(phi, phi)))
        out["majorize_quartic"] = min(out["majorize_quartic"], rel(obj["quartic"](x), obj["stage1"](x)))
        out["box_bound"] = min(out["box_bound"], rel(obj["stage1"](x), obj["stage1_box"](x)))
        out["hessian_bound"] = min(out["hessian_bound"], rel(obj["linear"](x), obj["stage2"](phi)))
        true_obj = (varpi * (float(np.real(x.conj() @ d @ x)) + float(np.real(phi.conj() @ e @ phi)) + s_ur)
                    - float(np.real(x.conj() @ c @ x)))
        bound = (obj["lam"] * m ** 2 * cfg.a_max ** 4 + obj["const1"] + obj["stage2"](phi)
                 + varpi * float(np.real(phi.conj() @ e @ phi)) + varpi * s_ur)
        out["objective"] = min(out["objective"], rel(true_obj, bound))
        jq = float(np.real(x.conj() @ j @ x))
        out["power_majorize"] = min(out["power_majorize"], rel(
            jq, lam_j * m ** 2 * cfg.a_max ** 4 + float(np.real(np.vdot(lin_tr, x))) + c4_tr))
        out["power_hessian"] = min(out["power_hessian"], rel(
            float(np.real(np.vdot(lin_tr, x))),
            0.5 * lam_p * ph2 + float(np.real(np.vdot(p_tilde, phi))) + c5))
        true_p = jq + float(np.real(phi.conj() @ k @ phi))
        p_bound = (lam_j * m ** 2 * cfg.a_max ** 4 + c4_tr + 0.5 * lam_p * ph2
                   + float(np.real(np.vdot(p_tilde, phi))) + c5 + float(np.real(phi.conj() @ k @ phi)))
        out["power_bound"] = min(out["power_bound"], rel(true_p, p_bound))
        if surrogate is not None:
            out["solver_objective"] = min(out["solver_objective"], rel(true_obj, surrogate.objective(phi)))
            out["solver_power"] = min(out["solver_power"], rel(true_p, surrogate.power(phi)))
    out["lam_f"] = obj["lam"]
    out["lam_f_tilde"] = obj["lam2"]
    out["lam_j"] = lam_j
    out["lam_p"] = lam_p
    out["f_tilde"] = obj["lin2"]
    out["p_tilde"] = p_tilde
    out["max_eig_j"] = pwr["lam"]
    return out


def w_surrogate_slacks(y_dense: np.ndarray, make_surrogate, pairs) -> tuple[float, float]:
    """Worst lower-bound slack and worst tangency gap of a minorizer of ``w^H Y w``.

    ``make_surrogate(w_s)`` returns the callable under test. Both numbers are
    relative to ``max(|w^H Y w|, |w_s^H Y w_s|)``.
    """
    worst_slack, worst_tan = np.inf, 0.0
    for w, w_s in pairs:
        q_w = float(np.real(np.vdot(w, y_dense @ w)))
        q_s = float(np.real(np.vdot(w_s, y_dense @ w_s)))
        sur = make_surrogate(w_s)
        scale = max(abs(q_w), abs(q_s), 1e-300)
        worst_slack = min(worst_slack, (q_w - sur(w)) / scale)
        worst_tan = max(worst_tan, abs(sur(w_s) - q_s) / max(abs(q_s), 1e-300))
    return worst_slack, worst_tan


def with_samples(mc: McConfig, n: int) -> McConfig:
    return replace(mc, n_samples=n)
