"""Convex subproblem layer: build a :class:`ConicProblem`, call :func:`solve`.

Two interchangeable backends honour the same status contract: ``"embedded"``
(the in-package primal-dual interior-point method) and ``"clarabel"``.
"""

from __future__ import annotations

import numpy as np

from . import clarabel_backend
from .ipm import solve_embedded
from .problem import (ConicProblem, ConicSolution, QuadConstraint, SocConstraint, Status,
                      lower_quadratic, to_standard_form)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200
DEFAULT_BACKEND = "clarabel" if clarabel_backend.available() else "embedded"

__all__ = [
    "ConicProblem", "ConicSolution", "QuadConstraint", "SocConstraint", "Status",
    "lower_quadratic", "solve", "to_standard_form", "DEFAULT_BACKEND",
]


def solve(p: ConicProblem, tol: float = DEFAULT_TOL, backend: str | None = None,
          max_iter: int = DEFAULT_MAX_ITER) -> ConicSolution:
    """Solve ``p``; failures are reported through ``status``, never raised."""
    backend = backend or DEFAULT_BACKEND
    c, g, h, dims = to_standard_form(p)
    cscale = np.linalg.norm(c)
    c_n = c / cscale if cscale > 0 else c
    if backend == "embedded":
        sol = solve_embedded(c_n, g, h, dims, tol=tol, max_iter=max_iter)
    elif backend == "clarabel":
        sol = clarabel_backend.solve_clarabel(c_n, g, h, dims, tol=tol, max_iter=max_iter)
        if sol.status in (Status.NUMERICAL_FAILURE, Status.MAX_ITER):
            # Clarabel stalls at reduced accuracy on some badly scaled subproblems
            retry = solve_embedded(c_n, g, h, dims, tol=tol, max_iter=max_iter)
            if retry.status in (Status.OPTIMAL, Status.INFEASIBLE):
                retry.extra["fallback_from"] = sol.message
                sol = retry
    else:
        raise ValueError(f"unknown conic backend {backend!r}")
    if cscale > 0 and sol.status is not Status.INFEASIBLE:
        sol.objective *= cscale
        sol.dual_objective *= cscale
        sol.dual_gap *= cscale
    if sol.status is Status.OPTIMAL:
        sol.primal_residual = max(0.0, p.max_violation(sol.z))
    sol.extra["backend"] = backend
    return sol
