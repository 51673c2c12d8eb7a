"""Reflection-coefficient update: Dinkelbach outer loop around an MM inner loop.

With ``x = phi (x) phi`` the radar SNR is ``f/g`` where

    f(phi) = x^H C x
    g(phi) = x^H D x + phi^H E phi + sigma_r^2 ||u||^2

and the RIS power is ``x^H J x + phi^H K phi``. ``C``, ``D``, ``J`` are Kronecker
products of ``M x M`` factors (:class:`KronOp`), ``E`` and ``K`` are diagonal.

The quartic terms are majorized in two stages: a largest-eigenvalue bound in
``x`` (made constant with ``||x||^2 <= M^2 a_max^4``), then a largest-eigenvalue
bound on the real-embedded quadratic that remains. Both stages leave a convex
quadratic in ``phi`` and the per-step problem is a small SOCP.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np

from . import conic
from .conic import ConicProblem, QuadConstraint, SocConstraint
from .model import ChannelSet, SystemConfig, check_feasibility
from .numerics import (KronOp, herm_real_form, max_eig_sym, real_embed, real_linear_form, realify,
                       stack_real, unstack_real)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhiProblemData:
    g_tilde: np.ndarray          # G^T diag(h_rt), N x M
    c_op: KronOp                 # rcs * Mc (x) Bu
    d_op: KronOp                 # rcs * sigma_z^2 * Jt (x) Bu
    e_diag: np.ndarray           # E = diag(e_diag)
    j_op: KronOp                 # rcs * (Mc + sigma_z^2 Jt) (x) Jt
    j_tilde: np.ndarray          # diag(|h_rt|^2)
    k_diag: np.ndarray           # K = diag(k_diag)
    desired_const: np.ndarray    # K: h_dk^T w_k
    desired_lin: np.ndarray      # K x M: h_k^T w_k = desired_const + desired_lin[k] @ phi
    interf_const: np.ndarray     # K x (L-1): h_dk^T w_i, i != k
    interf_lin: np.ndarray       # K x M x (L-1)
    noise_lin: np.ndarray        # K x M: sigma_z * h_rk (RIS noise amplitude map)
    sigma_user: np.ndarray       # K: sigma_k
    sigma_r_term: float          # sigma_r^2 ||u||^2
    m_c: np.ndarray              # G~^H W^* W^T G~
    b_u: np.ndarray              # G~^H u u^H G~

    @property
    def n_ris(self) -> int:
        return self.e_diag.size

    def f_val(self, phi) -> float:
        return self.c_op.quad_kron(phi)

    def g_val(self, phi) -> float:
        return (self.d_op.quad_kron(phi) + float(np.sum(self.e_diag * np.abs(phi) ** 2))
                + self.sigma_r_term)

    def power(self, phi) -> float:
        return self.j_op.quad_kron(phi) + float(np.sum(self.k_diag * np.abs(phi) ** 2))

    def ratio(self, phi) -> float:
        return dinkelbach_ratio(self.f_val(phi), self.g_val(phi))


@dataclass(frozen=True)
class PhiSurrogate:
    e_tilde: np.ndarray      # M x M, diagonal
    f_tilde_vec: np.ndarray
    k_tilde: np.ndarray      # M x M, diagonal
    p_tilde_vec: np.ndarray
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    lam_f: float
    lam_f_tilde: float
    lam_j: float
    lam_p: float

    def objective(self, phi) -> float:
        """Upper bound on ``varpi g(phi) - f(phi)``."""
        return (float(np.real(np.vdot(phi, self.e_tilde @ phi))) + float(np.real(np.vdot(self.f_tilde_vec, phi)))
                + self.c1 + self.c2 + self.c3)

    def power(self, phi) -> float:
        """Upper bound on the RIS reflection power."""
        return (float(np.real(np.vdot(phi, self.k_tilde @ phi))) + float(np.real(np.vdot(self.p_tilde_vec, phi)))
                + self.c4 + self.c5)


@dataclass(frozen=True)
class PhiOptions:
    max_outer: int = 20
    max_inner: int = 15
    tol: float = 1e-6
    inner_rel_tol: float = 1e-6
    single_update: bool = False
    backtrack: int = 8
    backend: str | None = None
    accept_tol: float = 1e-7


@dataclass
class PhiUpdate:
    phi: np.ndarray
    ratio_trace: list = field(default_factory=list)   # varpi per Dinkelbach round
    gap: float = 0.0                                  # final |f - varpi g| / g
    outer_iters: int = 0
    inner_iters: int = 0
    status: str = "ok"


def build_phi_data(cfg: SystemConfig, ch: ChannelSet, w_mat: np.ndarray, u: np.ndarray) -> PhiProblemData:
    w_mat = np.asarray(w_mat, dtype=complex)
    u = np.asarray(u, dtype=complex)
    rcs, s2z = cfg.rcs_var, cfg.sigma2_z
    g_tilde = ch.g_mat.T * ch.h_rt[None, :]
    wg = w_mat.T @ g_tilde                          # W^T G~, L x M
    m_c = wg.conj().T @ wg
    m_c = 0.5 * (m_c + m_c.conj().T)
    bu_f = g_tilde.conj().T @ u                     # G~^H u
    b_u = np.outer(bu_f, bu_f.conj())
    jt = np.diag(np.abs(ch.h_rt) ** 2).astype(complex)
    gw = ch.g_mat @ w_mat                           # M x L
    k, ll = cfg.n_users, cfg.n_cols
    des_c = np.empty(k, dtype=complex)
    des_l = np.empty((k, cfg.n_ris), dtype=complex)
    int_c = np.empty((k, ll - 1), dtype=complex)
    int_l = np.empty((k, cfg.n_ris, ll - 1), dtype=complex)
    hdw = ch.h_d @ w_mat
    for kk in range(k):
        r_all = ch.h_r[kk][:, None] * gw            # M x L
        others = [i for i in range(ll) if i != kk]
        des_c[kk] = hdw[kk, kk]
        des_l[kk] = r_all[:, kk]
        int_c[kk] = hdw[kk, others]
        int_l[kk] = r_all[:, others]
    return PhiProblemData(
        g_tilde=g_tilde,
        c_op=KronOp(rcs * m_c, b_u),
        d_op=KronOp(rcs * s2z * jt, b_u),
        e_diag=s2z * np.abs(ch.g_mat.conj() @ u) ** 2,
        j_op=KronOp(rcs * (m_c + s2z * jt), jt),
        j_tilde=jt,
        k_diag=np.sum(np.abs(gw) ** 2, axis=1) + 2.0 * s2z,
        desired_const=des_c,
        desired_lin=des_l,
        interf_const=int_c,
        interf_lin=int_l,
        noise_lin=np.sqrt(s2z) * ch.h_r,
        sigma_user=np.sqrt(cfg.sigma2_user),
        sigma_r_term=cfg.sigma2_r * float(np.real(np.vdot(u, u))),
        m_c=m_c,
        b_u=b_u,
    )


def dinkelbach_ratio(f_val: float, g_val: float) -> float:
    if not g_val > 0:
        raise ValueError("denominator must be positive")
    return float(f_val / g_val)


def _hessian_stage(lin_vec: np.ndarray, phi_s: np.ndarray):
    """Second stage: bound ``Re{lin^H (phi (x) phi)}`` by a tangent isotropic quadratic.

    Returns ``(lam, lin_tilde, const)`` with
    ``Re{lin^H x} <= lam/2 ||phi||^2 + Re{lin_tilde^H phi} + const``.
    """
    m = phi_s.size
    mat = lin_vec.reshape(m, m)             # row-major: x[i*m + j] = phi_i phi_j
    f_bar = real_embed(mat)
    hess = f_bar + f_bar.T
    lam = max_eig_sym(hess)
    pb = stack_real(phi_s)
    r = (hess - lam * np.eye(2 * m)) @ pb
    lin_tilde = r[:m] + 1j * r[m:]
    const = -float(pb @ f_bar.T @ pb) + 0.5 * lam * float(pb @ pb)
    return lam, lin_tilde, const


def objective_surrogate(data: PhiProblemData, varpi: float, phi_s: np.ndarray, cfg: SystemConfig):
    """Returns ``(E~, f~, c1, c2, c3, lam_f, lam_f~)``; see :class:`PhiSurrogate`."""
    m = data.n_ris
    phi_s = np.asarray(phi_s, dtype=complex)
    f_op = KronOp(varpi * data.d_op.left - data.c_op.left, data.b_u)
    lam_f = max(f_op.max_eig(), 0.0)
    x_s = np.kron(phi_s, phi_s)
    fx = f_op.matvec(x_s)
    f_vec = 2.0 * (fx - lam_f * x_s)
    xx = float(np.real(np.vdot(x_s, x_s)))
    c2 = lam_f * m ** 2 * cfg.a_max ** 4 + lam_f * xx - float(np.real(np.vdot(x_s, fx)))
    lam_ft, f_tilde, c3 = _hessian_stage(f_vec, phi_s)
    e_tilde = np.diag(varpi * data.e_diag + 0.5 * lam_ft).astype(complex)
    c1 = varpi * data.sigma_r_term
    return e_tilde, f_tilde, c1, c2, c3, lam_f, lam_ft


def power_surrogate(data: PhiProblemData, phi_s: np.ndarray, cfg: SystemConfig):
    """Returns ``(K~, p~, c4, c5, lam_j, lam_p)``; see :class:`PhiSurrogate`."""
    m = data.n_ris
    phi_s = np.asarray(phi_s, dtype=complex)
    lam_j = data.j_op.trace()
    x_s = np.kron(phi_s, phi_s)
    jx = data.j_op.matvec(x_s)
    p_vec = 2.0 * (jx - lam_j * x_s)
    xx = float(np.real(np.vdot(x_s, x_s)))
    c4 = lam_j * m ** 2 * cfg.a_max ** 4 + lam_j * xx - float(np.real(np.vdot(x_s, jx)))
    lam_p, p_tilde, c5 = _hessian_stage(p_vec, phi_s)
    k_tilde = np.diag(data.k_diag + 0.5 * lam_p).astype(complex)
    return k_tilde, p_tilde, c4, c5, lam_j, lam_p


def build_surrogate(data: PhiProblemData, varpi: float, phi_s: np.ndarray, cfg: SystemConfig) -> PhiSurrogate:
    e_t, f_t, c1, c2, c3, lam_f, lam_ft = objective_surrogate(data, varpi, phi_s, cfg)
    k_t, p_t, c4, c5, lam_j, lam_p = power_surrogate(data, phi_s, cfg)
    return PhiSurrogate(e_t, f_t, k_t, p_t, c1, c2, c3, c4, c5, lam_f, lam_ft, lam_j, lam_p)


def phi_constraints(sur: PhiSurrogate, data: PhiProblemData, cfg: SystemConfig, phi_s: np.ndarray,
                    n_extra: int = 0):
    """SOC and quadratic constraints on ``z = [Re phi; Im phi; extras]``."""
    m = data.n_ris
    nz = 2 * m + n_extra

    def pad(mat):
        mat = np.atleast_2d(mat)
        return np.hstack([mat, np.zeros((mat.shape[0], n_extra))]) if n_extra else mat

    socs, quads = [], []
    for i in range(m):
        a = np.zeros((2, nz))
        a[0, i] = a[1, m + i] = 1.0
        socs.append(SocConstraint(a, np.zeros(2), np.zeros(nz), cfg.a_max))
    if np.isfinite(cfg.p_ris):
        q = np.zeros((nz, nz))
        q[:2 * m, :2 * m] = herm_real_form(sur.k_tilde)
        lin = np.zeros(nz)
        lin[:2 * m] = real_linear_form(sur.p_tilde_vec.conj())
        quads.append(QuadConstraint(q, lin, cfg.p_ris - sur.c4 - sur.c5))
    for k in range(cfg.n_users):
        gam = float(cfg.gamma_targets[k])
        if gam <= 0:
            continue
        # interference, amplified RIS noise, receiver noise
        lin_int = realify(data.interf_lin[k].T)
        off_int = stack_real(data.interf_const[k])
        lin_noise = realify(np.diag(data.noise_lin[k]))
        rows = np.vstack([lin_int, lin_noise, np.zeros((1, 2 * m))])
        offs = np.concatenate([off_int, np.zeros(2 * m), [data.sigma_user[k]]])
        # concave lower bound on |desired|, tight at phi_s
        a_s = data.desired_const[k] + data.desired_lin[k] @ phi_s
        rot = np.exp(-1j * np.angle(a_s)) if abs(a_s) > 0 else 1.0
        c = np.zeros(nz)
        c[:2 * m] = real_linear_form(rot * data.desired_lin[k])
        d = float(np.real(rot * data.desired_const[k]))
        sg = np.sqrt(gam)
        socs.append(SocConstraint(pad(sg * rows), sg * offs, c, d))
    return socs, quads


def solve_phi_subproblem(sur: PhiSurrogate, data: PhiProblemData, cfg: SystemConfig,
                         phi_s: np.ndarray, backend: str | None = None):
    """Minimize the objective surrogate over the convexified constraint set.

    Returns ``(phi, ConicSolution)``; ``phi`` is ``None`` when the solve failed.
    """
    m = data.n_ris
    nz = 2 * m + 1
    socs, quads = phi_constraints(sur, data, cfg, phi_s, n_extra=1)
    q = herm_real_form(sur.e_tilde)
    lin = real_linear_form(sur.f_tilde_vec.conj())
    scale = max(float(np.abs(q).max(initial=0.0)), float(np.abs(lin).max(initial=0.0)))
    if scale == 0:
        scale = 1.0
    q, lin = q / scale, lin / scale
    # epigraph t >= z^T q z, objective lin^T z + t
    vals, vecs = np.linalg.eigh(q)
    keep = vals > 1e-14 * max(vals.max(initial=0.0), 1e-300)
    lt = (vecs[:, keep] * np.sqrt(vals[keep])).T
    a = np.zeros((lt.shape[0] + 1, nz))
    a[:lt.shape[0], :2 * m] = 2.0 * lt
    a[-1, -1] = 1.0
    b = np.zeros(a.shape[0])
    b[-1] = -1.0
    c = np.zeros(nz)
    c[-1] = 1.0
    socs.append(SocConstraint(a, b, c, 1.0))
    obj = np.concatenate([lin, [1.0]])
    sol = conic.solve(ConicProblem(nz, obj, socs, quads), backend=backend)
    if not sol.ok:
        return None, sol
    return unstack_real(sol.z[:2 * m]), sol


def _true_feasible(cfg, ch, w_mat, phi, tol) -> bool:
    return check_feasibility(cfg, ch, w_mat, phi, tol=tol).feasible


def _mm_round(data, cfg, ch, w_mat, varpi, phi_s, opts: PhiOptions, stats: dict):
    """Inner MM loop on ``varpi g - f``; returns the last accepted point."""
    cur = varpi * data.g_val(phi_s) - data.f_val(phi_s)
    for _ in range(opts.max_inner):
        sur = build_surrogate(data, varpi, phi_s, cfg)
        cand, sol = solve_phi_subproblem(sur, data, cfg, phi_s, backend=opts.backend)
        stats["inner"] += 1
        if cand is None:
            stats["status"] = sol.status.value
            log.debug("reflection step: conic status %s (%s)", sol.status.value, sol.message)
            break
        accepted = None
        step = 1.0
        for _ in range(opts.backtrack + 1):
            trial = phi_s + step * (cand - phi_s)
            val = varpi * data.g_val(trial) - data.f_val(trial)
            if val < cur and _true_feasible(cfg, ch, w_mat, trial, opts.accept_tol):
                accepted = (trial, val)
                break
            step *= 0.5
        if accepted is None:
            break
        scale = max(abs(cur), varpi * data.g_val(phi_s), 1e-300)
        improve = (cur - accepted[1]) / scale
        phi_s, cur = accepted
        if improve < opts.inner_rel_tol:
            break
    return phi_s


def update_phi(cfg: SystemConfig, ch: ChannelSet, w_mat: np.ndarray, u: np.ndarray,
               phi_init: np.ndarray, opts: PhiOptions = PhiOptions()) -> PhiUpdate:
    phi = np.array(phi_init, dtype=complex)
    if not _true_feasible(cfg, ch, w_mat, phi, opts.accept_tol):
        raise ValueError("initial reflection vector violates the constraints")
    data = build_phi_data(cfg, ch, w_mat, u)
    varpi = data.ratio(phi)
    out = PhiUpdate(phi, [varpi])
    stats = {"inner": 0, "status": "ok"}
    n_outer = 1 if opts.single_update else opts.max_outer
    for it in range(n_outer):
        phi = _mm_round(data, cfg, ch, w_mat, varpi, phi, opts, stats)
        f, g = data.f_val(phi), data.g_val(phi)
        gap = (f - varpi * g) / g
        varpi = dinkelbach_ratio(f, g)
        out.ratio_trace.append(varpi)
        out.outer_iters = it + 1
        out.gap = abs(gap)
        # relative as well as absolute: linear SNRs here can be far below one
        if abs(gap) <= opts.tol * min(1.0, varpi):
            break
    out.phi = phi
    out.inner_iters = stats["inner"]
    out.status = stats["status"]
    return out
