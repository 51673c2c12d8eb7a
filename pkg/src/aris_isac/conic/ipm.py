"""Embedded primal-dual interior-point solver for nonnegative x second-order cones.

Homogeneous self-dual embedding with Nesterov-Todd scaling and a Mehrotra
predictor-corrector, dense linear algebra throughout. Problem form::

    min c^T x   s.t.  G x + s = h,   s in K = R_+^l x Q^{q_1} x ... x Q^{q_p}

The infeasible-start embedding gives certificates of primal infeasibility
without a separate phase-one problem.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .problem import ConicSolution, Status

STEP_FRACTION = 0.99
REFINE_STEPS = 2


class _Cones:
    def __init__(self, dims):
        self.l = int(dims["l"])
        self.q = [int(d) for d in dims["q"]]
        self.slices = []
        off = self.l
        for d in self.q:
            self.slices.append(slice(off, off + d))
            off += d
        self.m = off
        self.degree = self.l + len(self.q)

    def identity(self) -> np.ndarray:
        e = np.zeros(self.m)
        e[: self.l] = 1.0
        for sl in self.slices:
            e[sl.start] = 1.0
        return e

    def jordan(self, u, v):
        out = np.empty(self.m)
        out[: self.l] = u[: self.l] * v[: self.l]
        for sl in self.slices:
            a, b = u[sl], v[sl]
            out[sl.start] = a @ b
            out[sl.start + 1: sl.stop] = a[0] * b[1:] + b[0] * a[1:]
        return out

    def jordan_div(self, lam, d):
        """Solve ``lam o x = d`` for ``x``."""
        out = np.empty(self.m)
        out[: self.l] = d[: self.l] / lam[: self.l]
        for sl in self.slices:
            l0, l1 = lam[sl.start], lam[sl.start + 1: sl.stop]
            d0, d1 = d[sl.start], d[sl.start + 1: sl.stop]
            det = l0 * l0 - l1 @ l1
            x0 = (l0 * d0 - l1 @ d1) / det
            out[sl.start] = x0
            out[sl.start + 1: sl.stop] = (d1 - x0 * l1) / l0
        return out

    def max_step(self, u, du) -> float:
        """Largest alpha with ``u + alpha du`` in the cone (inf if unbounded)."""
        alpha = np.inf
        if self.l:
            neg = du[: self.l] < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(-u[: self.l][neg] / du[: self.l][neg])))
        for sl in self.slices:
            alpha = min(alpha, _soc_max_step(u[sl], du[sl]))
        return alpha


def _soc_max_step(u, du) -> float:
    # u0 + a*du0 >= ||u1 + a*du1|| ; u strictly interior
    a = du[0] ** 2 - du[1:] @ du[1:]
    b = u[0] * du[0] - u[1:] @ du[1:]
    c = u[0] ** 2 - u[1:] @ u[1:]
    alpha = np.inf
    if du[0] < 0:
        alpha = -u[0] / du[0]
    # roots of a t^2 + 2 b t + c = 0 with c > 0
    if abs(a) <= 1e-300:
        if b < 0:
            alpha = min(alpha, -c / (2 * b))
    else:
        disc = b * b - a * c
        if disc >= 0:
            sq = np.sqrt(disc)
            roots = [(-b - sq) / a, (-b + sq) / a]
            pos = [r for r in roots if r > 0]
            if pos:
                alpha = min(alpha, min(pos))
    return alpha


class _Scaling:
    """Nesterov-Todd scaling ``W`` (symmetric, block diagonal) with ``W z = W^{-1} s``."""

    def __init__(self, cones: _Cones, s, z):
        self.cones = cones
        self.lp_w = np.sqrt(s[: cones.l] / z[: cones.l])
        self.blocks = []
        self.inv_blocks = []
        for sl in cones.slices:
            w, winv = _soc_nt(s[sl], z[sl])
            self.blocks.append(w)
            self.inv_blocks.append(winv)
        self.lam = self.apply(z)

    def apply(self, v):
        out = np.empty_like(v)
        out[: self.cones.l] = self.lp_w * v[: self.cones.l]
        for sl, w in zip(self.cones.slices, self.blocks):
            out[sl] = w @ v[sl]
        return out

    def apply_inv(self, v):
        out = np.empty_like(v)
        if v.ndim == 1:
            out[: self.cones.l] = v[: self.cones.l] / self.lp_w
        else:
            out[: self.cones.l] = v[: self.cones.l] / self.lp_w[:, None]
        for sl, w in zip(self.cones.slices, self.inv_blocks):
            out[sl] = w @ v[sl]
        return out


def _soc_nt(s, z):
    js = s[0] ** 2 - s[1:] @ s[1:]
    jz = z[0] ** 2 - z[1:] @ z[1:]
    if not (js > 0 and jz > 0):
        raise FloatingPointError("iterate left the cone interior")
    sb = s / np.sqrt(js)
    zb = z / np.sqrt(jz)
    gam = np.sqrt(0.5 * (1.0 + sb @ zb))
    wb = np.empty_like(s)
    wb[0] = (sb[0] + zb[0]) / (2 * gam)
    wb[1:] = (sb[1:] - zb[1:]) / (2 * gam)
    eta = (js / jz) ** 0.25
    d = s.size
    h = np.empty((d, d))
    h[0, 0] = wb[0]
    h[0, 1:] = wb[1:]
    h[1:, 0] = wb[1:]
    h[1:, 1:] = np.eye(d - 1) + np.outer(wb[1:], wb[1:]) / (1.0 + wb[0])
    hinv = h.copy()
    hinv[0, 1:] *= -1
    hinv[1:, 0] *= -1
    return eta * h, hinv / eta


def solve_embedded(c, g, h, dims, tol: float = 1e-8, max_iter: int = 200) -> ConicSolution:
    cones = _Cones(dims)
    n = c.size
    m = cones.m
    if g.shape != (m, n):
        raise ValueError("constraint matrix does not match the cone dimensions")
    e = cones.identity()
    x = np.zeros(n)
    s = e.copy()
    z = e.copy()
    tau = kappa = 1.0
    nc = max(1.0, np.linalg.norm(c))
    nh = max(1.0, np.linalg.norm(h))
    status = Status.MAX_ITER
    msg = ""
    it = 0
    pres = dres = gap = np.inf
    for it in range(max_iter + 1):
        rx = g.T @ z + c * tau
        rz = s + g @ x - h * tau
        rt = kappa + c @ x + h @ z
        mu = (s @ z + tau * kappa) / (cones.degree + 1)
        pcost = c @ x / tau
        dcost = -(h @ z) / tau
        pres = np.linalg.norm(rz) / tau / nh
        dres = np.linalg.norm(rx) / tau / nc
        gap = (s @ z) / tau ** 2
        relgap = np.inf
        if pcost < 0:
            relgap = gap / -pcost
        elif dcost > 0:
            relgap = gap / dcost
        if pres <= tol and dres <= tol and (gap <= tol or relgap <= tol):
            status = Status.OPTIMAL
            break
        hz = h @ z
        if hz < 0 and np.linalg.norm(g.T @ z) / -hz <= tol:
            status = Status.INFEASIBLE
            msg = "primal infeasibility certificate found"
            break
        cx = c @ x
        if cx < 0 and np.linalg.norm(g @ x + s) / -cx <= tol:
            status = Status.NUMERICAL_FAILURE
            msg = "problem appears unbounded"
            break
        if it == max_iter:
            break

        try:
            scal = _Scaling(cones, s, z)
            lam = scal.lam
            gh = scal.apply_inv(g)
            hess = gh.T @ gh
            reg = 1e-13 * max(1.0, np.trace(hess) / n)
            hess[np.diag_indices(n)] += reg
            fac = sla.cho_factor(hess, lower=True, check_finite=True)
        except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
            status = Status.NUMERICAL_FAILURE
            msg = f"KKT factorization failed: {exc}"
            break

        def kkt_normal(px, pz):
            qh = scal.apply_inv(pz)
            dx = sla.cho_solve(fac, px + gh.T @ qh)
            dz = scal.apply_inv(gh @ dx - qh)
            return dx, dz

        def kkt(px, pz):
            # solves G^T dz = px, G dx - W^2 dz = pz; the normal equations lose
            # accuracy near the cone boundary, so refine on the full system
            dx, dz = kkt_normal(px, pz)
            for _ in range(REFINE_STEPS):
                ex = px - g.T @ dz
                ez = pz - (g @ dx - scal.apply(scal.apply(dz)))
                cx, cz = kkt_normal(ex, ez)
                dx, dz = dx + cx, dz + cz
            return dx, dz

        x1, z1 = kkt(-c, h)
        denom = c @ x1 + h @ z1 - kappa / tau

        def direction(eta, ds_rhs, dk_rhs):
            w_inv_term = scal.apply(cones.jordan_div(lam, ds_rhs))
            bx = -eta * rx
            bz = -eta * rz - w_inv_term
            bt = -eta * rt - dk_rhs / tau
            x2, z2 = kkt(bx, bz)
            dtau = (bt - c @ x2 - h @ z2) / denom
            dx = x2 + dtau * x1
            dz = z2 + dtau * z1
            ds = scal.apply(cones.jordan_div(lam, ds_rhs) - scal.apply(dz))
            dkap = (dk_rhs - kappa * dtau) / tau
            return dx, dz, ds, dtau, dkap

        def step_len(dz, ds, dtau, dkap):
            a = min(cones.max_step(s, ds), cones.max_step(z, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkap < 0:
                a = min(a, -kappa / dkap)
            return a

        # predictor
        lam_sq = cones.jordan(lam, lam)
        dxa, dza, dsa, dta, dka = direction(1.0, -lam_sq, -tau * kappa)
        alpha_a = min(1.0, step_len(dza, dsa, dta, dka))
        sigma = float(np.clip((1.0 - alpha_a) ** 3, 0.0, 1.0))
        # corrector
        corr = cones.jordan(scal.apply_inv(dsa), scal.apply(dza))
        ds_rhs = -lam_sq - corr + sigma * mu * e
        dk_rhs = -tau * kappa - dta * dka + sigma * mu
        dx, dz, ds, dtau, dkap = direction(1.0 - sigma, ds_rhs, dk_rhs)
        alpha = min(1.0, STEP_FRACTION * step_len(dz, ds, dtau, dkap))
        if not np.isfinite(alpha) or alpha < 1e-12:
            status = Status.NUMERICAL_FAILURE
            msg = "step length collapsed"
            break
        x = x + alpha * dx
        s = s + alpha * ds
        z = z + alpha * dz
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkap
        if not (np.all(np.isfinite(x)) and np.isfinite(tau)):
            status = Status.NUMERICAL_FAILURE
            msg = "non-finite iterate"
            break

    if status is Status.INFEASIBLE:
        hz = -(h @ z)
        return ConicSolution(np.full(n, np.nan), status, float("nan"), float("nan"),
                             iterations=it, message=msg, extra={"certificate": z / hz})
    xs = x / tau
    return ConicSolution(
        z=xs,
        status=status,
        primal_residual=float(pres),
        dual_gap=float(gap),
        objective=float(c @ xs),
        dual_objective=float(-(h @ z) / tau),
        iterations=it,
        message=msg,
    )
