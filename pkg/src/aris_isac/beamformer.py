"""Transmit-beamformer update by minorize-maximize on the vectorized problem.

``w = vec(W)`` stacks the ``L = K + N`` columns. Every operator in the
vectorized problem is block diagonal (``I_L (x) block``), so only the
``N x N`` blocks are stored; ``dense_*`` helpers build the full operators for
testing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np

from . import conic
from .conic import ConicProblem, SocConstraint, Status
from .model import (ChannelSet, InfeasibleError, SystemConfig, check_feasibility, composite_channels,
                    radar_cascade)
from .numerics import real_linear_form, realify, stack_real, unstack_real, vec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WProblemData:
    y_vec: np.ndarray       # H_t^H u; the block of Y is y y^H
    z_block: np.ndarray     # G^H Phi^H Phi G + rcs_var * Zt^H Zt
    z_factor: np.ndarray    # z_block = z_factor^H z_factor
    h_comp: np.ndarray      # K x N composite channels
    c_ris: float
    c0: np.ndarray          # per-user noise term
    n_cols: int

    @property
    def n_bs(self) -> int:
        return self.y_vec.size

    @property
    def y_block(self) -> np.ndarray:
        return np.outer(self.y_vec, self.y_vec.conj())

    def y_apply(self, w: np.ndarray) -> np.ndarray:
        wm = w.reshape(self.n_cols, self.n_bs)        # row i = w_i
        return (np.outer(wm @ self.y_vec.conj(), self.y_vec)).reshape(-1)

    def y_quad(self, w: np.ndarray) -> float:
        wm = w.reshape(self.n_cols, self.n_bs)
        return float(np.sum(np.abs(wm @ self.y_vec.conj()) ** 2))

    def z_quad(self, w: np.ndarray) -> float:
        wm = w.reshape(self.n_cols, self.n_bs)
        return float(np.sum(np.abs(wm @ self.z_factor.T) ** 2))

    def dense_y(self) -> np.ndarray:
        return np.kron(np.eye(self.n_cols), self.y_block)

    def dense_z(self) -> np.ndarray:
        return np.kron(np.eye(self.n_cols), self.z_block)

    def h_op(self, k: int) -> np.ndarray:
        """``H_k = I_L (x) h_k^T``, maps ``w`` to ``[h_k^T w_1, ..., h_k^T w_L]``."""
        return np.kron(np.eye(self.n_cols), self.h_comp[k][None, :])


@dataclass(frozen=True)
class MmOptions:
    max_iters: int = 30
    rel_tol: float = 1e-5
    restore_feasibility: bool = True
    single_step: bool = False
    backend: str | None = None
    accept_tol: float = 1e-7

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class WUpdate:
    w_mat: np.ndarray
    objective_trace: list = field(default_factory=list)
    status: str = "ok"
    iterations: int = 0


@dataclass(frozen=True)
class LinearSurrogate:
    """``s(w) = 2 Re{grad^H w} + const``; minorizes ``w^H Y w``, tight at the anchor."""

    grad: np.ndarray
    const: float

    def __call__(self, w: np.ndarray) -> float:
        return float(2.0 * np.real(np.vdot(self.grad, w)) + self.const)


def build_w_data(cfg: SystemConfig, ch: ChannelSet, phi: np.ndarray, u: np.ndarray) -> WProblemData:
    phi = np.asarray(phi, dtype=complex)
    casc = radar_cascade(ch, phi)
    y = casc.h_t.conj().T @ u
    phig = phi[:, None] * ch.g_mat
    a = phi * ch.h_rt
    zt = np.outer(a, a @ ch.g_mat)
    z_block = phig.conj().T @ phig + cfg.rcs_var * zt.conj().T @ zt
    z_block = 0.5 * (z_block + z_block.conj().T)
    vals, vecs = np.linalg.eigh(z_block)
    keep = vals > 1e-14 * max(vals.max(initial=0.0), 1e-300)
    z_factor = np.sqrt(vals[keep])[:, None] * vecs[:, keep].conj().T
    na2 = float(np.sum(np.abs(a) ** 2))
    c_ris = cfg.rcs_var * cfg.sigma2_z * na2 ** 2 + 2.0 * cfg.sigma2_z * float(np.sum(np.abs(phi) ** 2))
    c0 = cfg.sigma2_z * np.sum(np.abs(ch.h_r * phi[None, :]) ** 2, axis=1) + cfg.sigma2_user
    return WProblemData(y, z_block, z_factor, composite_channels(ch, phi), c_ris, c0, cfg.n_cols)


def w_surrogate(data: WProblemData, w_s: np.ndarray) -> LinearSurrogate:
    grad = data.y_apply(w_s)
    return LinearSurrogate(grad, -data.y_quad(w_s))


def rotate_user_columns(data: WProblemData, w_mat: np.ndarray) -> np.ndarray:
    """Rotate each user column so ``h_k^T w_k`` is real and nonnegative."""
    w_mat = np.array(w_mat, dtype=complex)
    k = data.h_comp.shape[0]
    gains = np.einsum("kn,nk->k", data.h_comp, w_mat[:, :k])
    ph = np.where(np.abs(gains) > 0, np.exp(-1j * np.angle(gains)), 1.0)
    w_mat[:, :k] *= ph[None, :]
    return w_mat


def sinr_soc_holds(data: WProblemData, w: np.ndarray, k: int, gamma: float) -> bool:
    """Squared form of the SOC SINR constraint, for rotated ``w``."""
    n = data.n_bs
    hw = data.h_op(k) @ w
    lhs = (1 + gamma) * np.abs(data.h_comp[k] @ w[k * n:(k + 1) * n]) ** 2
    return bool(lhs >= gamma * (np.sum(np.abs(hw) ** 2) + data.c0[k]))


def w_constraints(data: WProblemData, cfg: SystemConfig, n_extra: int = 0,
                  slack_weights: np.ndarray | None = None) -> list[SocConstraint]:
    """Constraint set on ``z = [Re w; Im w; extras]``.

    With ``slack_weights`` the SINR cones get ``+ slack_weights[k] * z[-1]`` on
    their right-hand side (used by the feasibility pre-phase).
    """
    n, ll = data.n_bs, data.n_cols
    nw = n * ll
    nz = 2 * nw + n_extra

    def pad(mat):
        mat = np.atleast_2d(mat)
        return np.hstack([mat, np.zeros((mat.shape[0], n_extra))]) if n_extra else mat

    cons = [SocConstraint(pad(np.eye(2 * nw)), np.zeros(2 * nw), np.zeros(nz), np.sqrt(cfg.p_bs))]
    if np.isfinite(cfg.p_ris) and data.z_factor.shape[0] > 0:
        budget = cfg.p_ris - data.c_ris
        if budget < 0:
            raise InfeasibleError("RIS noise power alone exceeds the RIS budget",
                                  {"c_ris": data.c_ris, "p_ris": cfg.p_ris})
        op = realify(np.kron(np.eye(ll), data.z_factor))
        cons.append(SocConstraint(pad(op), np.zeros(op.shape[0]), np.zeros(nz), np.sqrt(budget)))
    for k in range(data.h_comp.shape[0]):
        gam = float(cfg.gamma_targets[k])
        if gam <= 0:
            continue
        a = np.sqrt(gam) * realify(data.h_op(k))
        a = np.vstack([a, np.zeros((1, 2 * nw))])
        b = np.zeros(a.shape[0])
        b[-1] = np.sqrt(gam * data.c0[k])
        sel = np.zeros(nw, dtype=complex)
        sel[k * n:(k + 1) * n] = data.h_comp[k]
        c = np.zeros(nz)
        c[:2 * nw] = np.sqrt(1.0 + gam) * real_linear_form(sel)
        if slack_weights is not None:
            c[-1] = slack_weights[k]
        cons.append(SocConstraint(pad(a), b, c, 0.0))
    return cons


def feasibility_prephase(data: WProblemData, cfg: SystemConfig, backend: str | None = None,
                         slack_tol: float = 1e-7) -> np.ndarray:
    """Beamformer with the best common (noise-normalized) SINR slack.

    Returns ``W`` satisfying the SINR cones when the optimal slack is
    nonpositive, otherwise raises :class:`InfeasibleError`.
    """
    n, ll = data.n_bs, data.n_cols
    nw = n * ll
    weights = np.sqrt(cfg.gamma_targets * data.c0)
    cons = w_constraints(data, cfg, n_extra=1, slack_weights=weights)
    obj = np.zeros(2 * nw + 1)
    obj[-1] = 1.0
    sol = conic.solve(ConicProblem(2 * nw + 1, obj, cons), backend=backend)
    if sol.status is Status.INFEASIBLE:
        raise InfeasibleError("feasibility pre-phase is infeasible", {"status": sol.status.value})
    if not sol.ok:
        raise InfeasibleError(f"feasibility pre-phase failed ({sol.status.value}: {sol.message})",
                              {"status": sol.status.value})
    slack = float(sol.z[-1])
    if slack > slack_tol:
        raise InfeasibleError("SINR targets unattainable under the power budgets",
                              {"slack": slack})
    return unvec_w(unstack_real(sol.z[:-1]), n)


def unvec_w(w: np.ndarray, n_bs: int) -> np.ndarray:
    return np.asarray(w).reshape(-1, n_bs).T.copy()


def mm_update_w(data: WProblemData, cfg: SystemConfig, ch: ChannelSet, phi: np.ndarray,
                w_init: np.ndarray, opts: MmOptions = MmOptions()) -> WUpdate:
    """Maximize ``w^H Y w`` over the beamformer constraints by linearization steps.

    Each step maximizes the tangent minorizer over the convex set; the true
    objective is monotone and every accepted iterate is feasible.
    """
    n = data.n_bs
    w_mat = rotate_user_columns(data, w_init)
    feas = check_feasibility(cfg, ch, w_mat, phi, tol=opts.accept_tol)
    if not feas.feasible:
        raise InfeasibleError("initial beamformer violates the constraints", feas.worst())
    w_s = vec(w_mat)
    obj_s = data.y_quad(w_s)
    trace = [obj_s]
    out = WUpdate(w_mat, trace)
    if obj_s == 0.0 and not np.any(data.y_vec):
        return out
    cons = w_constraints(data, cfg)
    nz = 2 * n * data.n_cols
    max_iters = 1 if opts.single_step else opts.max_iters
    for it in range(max_iters):
        sur = w_surrogate(data, w_s)
        obj_vec = -stack_real(sur.grad)
        if not np.any(obj_vec):
            break
        sol = conic.solve(ConicProblem(nz, obj_vec, cons), backend=opts.backend)
        out.iterations = it + 1
        if not sol.ok:
            out.status = sol.status.value
            log.debug("beamformer step %d: conic status %s (%s)", it, sol.status.value, sol.message)
            break
        w_new_mat = rotate_user_columns(data, unvec_w(unstack_real(sol.z), n))
        w_new = vec(w_new_mat)
        obj_new = data.y_quad(w_new)
        if obj_new < obj_s * (1.0 - 1e-12):
            break
        if not check_feasibility(cfg, ch, w_new_mat, phi, tol=opts.accept_tol).feasible:
            out.status = "rejected_infeasible"
            break
        rel = (obj_new - obj_s) / max(obj_s, 1e-300)
        w_s, obj_s = w_new, obj_new
        out.w_mat = w_new_mat
        trace.append(obj_s)
        if rel < opts.rel_tol:
            break
    return out
