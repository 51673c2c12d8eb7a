"""Canonical real conic problem: linear objective, SOC and convex-quadratic constraints."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class SocConstraint:
    """``||a z + b||_2 <= c^T z + d``. A zero-row ``a`` gives a halfspace."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        a = np.asarray(self.a, dtype=float).reshape(-1, c.size)
        b = np.asarray(self.b, dtype=float).ravel()
        if b.size != a.shape[0]:
            raise ValueError("SOC offset length does not match the number of rows")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", float(self.d))

    def residual(self, z: np.ndarray) -> float:
        """Positive when violated."""
        return float(np.linalg.norm(self.a @ z + self.b) - (self.c @ z + self.d))


@dataclass(frozen=True)
class QuadConstraint:
    """``z^T q z + lin^T z <= r`` with ``q`` PSD."""

    q: np.ndarray
    lin: np.ndarray
    r: float

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.q, dtype=float))
        lin = np.asarray(self.lin, dtype=float).ravel()
        if q.shape != (lin.size, lin.size):
            raise ValueError("quadratic constraint dimensions are inconsistent")
        object.__setattr__(self, "q", 0.5 * (q + q.T))
        object.__setattr__(self, "lin", lin)
        object.__setattr__(self, "r", float(self.r))

    def residual(self, z: np.ndarray) -> float:
        return float(z @ self.q @ z + self.lin @ z - self.r)


@dataclass(frozen=True)
class ConicProblem:
    """Minimize ``objective @ z`` subject to all constraints."""

    n_vars: int
    objective: np.ndarray
    soc_constraints: tuple = ()
    quad_constraints: tuple = ()

    def __post_init__(self):
        obj = np.asarray(self.objective, dtype=float).ravel()
        if obj.size != self.n_vars:
            raise ValueError("objective length must equal n_vars")
        object.__setattr__(self, "objective", obj)
        object.__setattr__(self, "soc_constraints", tuple(self.soc_constraints))
        object.__setattr__(self, "quad_constraints", tuple(self.quad_constraints))
        for s in self.soc_constraints:
            if s.c.size != self.n_vars:
                raise ValueError("SOC constraint width does not match n_vars")
        for q in self.quad_constraints:
            if q.lin.size != self.n_vars:
                raise ValueError("quadratic constraint width does not match n_vars")
            lam_min = np.linalg.eigvalsh(q.q)[0] if q.q.size else 0.0
            if lam_min < -1e-9 * max(1.0, float(np.abs(q.q).max(initial=0.0))):
                raise ValueError(f"quadratic constraint matrix is not PSD (min eig {lam_min:.3e})")

    def all_socs(self) -> list[SocConstraint]:
        return list(self.soc_constraints) + [lower_quadratic(q.q, q.lin, q.r) for q in self.quad_constraints]

    def max_violation(self, z: np.ndarray) -> float:
        res = [s.residual(z) for s in self.soc_constraints]
        res += [q.residual(z) for q in self.quad_constraints]
        return max(res, default=0.0)


@dataclass
class ConicSolution:
    z: np.ndarray
    status: Status
    primal_residual: float
    dual_gap: float
    objective: float = float("nan")
    dual_objective: float = float("nan")
    iterations: int = 0
    message: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


def lower_quadratic(q: np.ndarray, lin: np.ndarray, r: float, psd_tol: float = 1e-9) -> SocConstraint:
    """SOC equivalent of ``z^T q z + lin^T z <= r``.

    With ``q = L L^T`` and ``t = r - lin^T z`` the constraint reads
    ``||L^T z||^2 <= t``, i.e. ``||(2 L^T z, t - 1)|| <= t + 1``. When ``lin = 0``
    the plain ball ``||L^T z|| <= sqrt(r)`` is used instead.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    lin = np.asarray(lin, dtype=float).ravel()
    n = lin.size
    q = 0.5 * (q + q.T)
    # positive rescaling keeps the set; it keeps the rotated cone's unit offset
    # from swamping tiny data
    norm = max(float(np.abs(q).max(initial=0.0)), float(np.abs(lin).max(initial=0.0)), abs(float(r)))
    if norm > 0:
        q, lin, r = q / norm, lin / norm, r / norm
    vals, vecs = np.linalg.eigh(q) if n else (np.zeros(0), np.zeros((0, 0)))
    scale = float(np.abs(vals).max(initial=0.0))
    if vals.size and vals[0] < -psd_tol * max(scale, 1e-300):
        raise ValueError(f"quadratic form is indefinite (min eig {vals[0]:.3e})")
    keep = vals > 1e-14 * scale
    lt = (vecs[:, keep] * np.sqrt(vals[keep])).T      # rows of L^T
    if not np.any(lin) and r >= 0:
        return SocConstraint(lt, np.zeros(lt.shape[0]), np.zeros(n), np.sqrt(r))
    a = np.vstack([2.0 * lt, -lin[None, :]])
    b = np.concatenate([np.zeros(lt.shape[0]), [r - 1.0]])
    return SocConstraint(a, b, -lin, r + 1.0)


def to_standard_form(p: ConicProblem):
    """Rewrite as ``min c^T z  s.t.  G z + s = h, s in K``.

    Cones are ordered nonnegative block first, then one SOC per constraint with
    at least one row. Each cone block is row-normalized (positive scaling keeps
    membership unchanged). Returns ``(c, G, h, dims)`` with
    ``dims = {"l": int, "q": [sizes]}``.
    """
    n = p.n_vars
    lp_g, lp_h, soc_g, soc_h, q_sizes = [], [], [], [], []
    for s in p.all_socs():
        g_blk = -np.vstack([s.c[None, :], s.a])
        h_blk = np.concatenate([[s.d], s.b])
        scale = max(np.abs(g_blk).max(initial=0.0), np.abs(h_blk).max(initial=0.0))
        if scale > 0:
            g_blk, h_blk = g_blk / scale, h_blk / scale
        if s.a.shape[0] == 0:
            lp_g.append(g_blk)
            lp_h.append(h_blk)
        else:
            soc_g.append(g_blk)
            soc_h.append(h_blk)
            q_sizes.append(g_blk.shape[0])
    blocks_g = lp_g + soc_g
    blocks_h = lp_h + soc_h
    g = np.vstack(blocks_g) if blocks_g else np.zeros((0, n))
    h = np.concatenate(blocks_h) if blocks_h else np.zeros(0)
    return p.objective.copy(), g, h, {"l": len(lp_g), "q": q_sizes}
