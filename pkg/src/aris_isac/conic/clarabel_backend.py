"""Adapter to the Clarabel interior-point solver (same contract as the embedded one)."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .problem import ConicSolution, Status

try:
    import clarabel
except ImportError:  # pragma: no cover - optional backend
    clarabel = None


def available() -> bool:
    return clarabel is not None


def solve_clarabel(c, g, h, dims, tol: float = 1e-8, max_iter: int = 200) -> ConicSolution:
    if clarabel is None:
        raise RuntimeError("clarabel is not installed")
    n = c.size
    cones = []
    if dims["l"]:
        cones.append(clarabel.NonnegativeConeT(dims["l"]))
    cones += [clarabel.SecondOrderConeT(d) for d in dims["q"]]
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = tol
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_infeas_abs = tol
    settings.tol_infeas_rel = tol
    settings.max_iter = max_iter
    settings.presolve_enable = False
    p_mat = sp.csc_matrix((n, n))
    solver = clarabel.DefaultSolver(p_mat, c, sp.csc_matrix(g), h, cones, settings)
    sol = solver.solve()
    st = sol.status
    S = clarabel.SolverStatus
    x = np.asarray(sol.x, dtype=float)
    s = np.asarray(sol.s, dtype=float)
    zd = np.asarray(sol.z, dtype=float)
    if st == S.Solved:
        status = Status.OPTIMAL
    elif st in (S.PrimalInfeasible, S.AlmostPrimalInfeasible):
        status = Status.INFEASIBLE
    elif st == S.MaxIterations:
        status = Status.MAX_ITER
    else:
        status = Status.NUMERICAL_FAILURE
    if status is Status.INFEASIBLE:
        return ConicSolution(np.full(n, np.nan), status, float("nan"), float("nan"),
                             iterations=int(sol.iterations), message=str(st))
    pres = float(np.linalg.norm(g @ x + s - h) / max(1.0, np.linalg.norm(h)))
    return ConicSolution(
        z=x,
        status=status,
        primal_residual=pres,
        dual_gap=float(abs(s @ zd)),
        objective=float(c @ x),
        dual_objective=float(-(h @ zd)),
        iterations=int(sol.iterations),
        message=str(st),
    )
