"""Solver backends behind a common ``Solution`` contract.

``ClarabelBackend`` talks to Clarabel's native API and is the default for both
the offline SDPs and the online SOCP. ``CvxpyBackend`` re-expresses the
standard form in cvxpy so any installed cvxpy solver can cross-check results.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import BackendUnavailableError
from .program import FULL_CONES, LEAN_CONES, NONNEG, PSD, SOC, ZERO, ConicProgram, StandardForm, smat

OPTIMAL, INFEASIBLE, UNBOUNDED, INACCURATE, ERROR = "optimal", "infeasible", "unbounded", "inaccurate", "error"
FEASIBILITY_TOL = 1e-6


@dataclass
class Solution:
    status: str
    values: dict = field(default_factory=dict)
    objective: float = float("nan")
    solve_time: float = 0.0
    x: np.ndarray | None = None
    max_violation: float = float("nan")
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status in (OPTIMAL, INACCURATE)

    def __getitem__(self, name):
        return self.values[name]


class ClarabelBackend:
    name = "clarabel"
    cones = FULL_CONES

    def __init__(self, **settings):
        try:
            import clarabel
        except ImportError as exc:  # pragma: no cover
            raise BackendUnavailableError("clarabel is not installed") from exc
        self._clarabel = clarabel
        self.settings = dict(verbose=False)
        self.settings.update(settings)

    def _settings(self):
        s = self._clarabel.DefaultSettings()
        for k, v in self.settings.items():
            setattr(s, k, v)
        return s

    def _cones(self, sf: StandardForm):
        c = self._clarabel
        out = []
        for kind, dim in sf.cones:
            if kind == ZERO:
                out.append(c.ZeroConeT(dim))
            elif kind == NONNEG:
                out.append(c.NonnegativeConeT(dim))
            elif kind == SOC:
                out.append(c.SecondOrderConeT(dim))
            elif kind == PSD:
                out.append(c.PSDTriangleConeT(dim))
        return out

    def _status(self, st) -> str:
        name = str(st).split(".")[-1]
        return {
            "Solved": OPTIMAL,
            "AlmostSolved": INACCURATE,
            "PrimalInfeasible": INFEASIBLE,
            "AlmostPrimalInfeasible": INFEASIBLE,
            "DualInfeasible": UNBOUNDED,
            "AlmostDualInfeasible": UNBOUNDED,
        }.get(name, ERROR)

    def solve_standard(self, sf: StandardForm, b=None) -> Solution:
        b = sf.b if b is None else b
        t0 = time.perf_counter()
        solver = self._clarabel.DefaultSolver(sf.P, sf.q, sf.A, b, self._cones(sf), self._settings())
        res = solver.solve()
        elapsed = time.perf_counter() - t0
        return self._wrap(res, sf, elapsed)

    def _wrap(self, res, sf, elapsed) -> Solution:
        status = self._status(res.status)
        x = np.asarray(res.x) if status in (OPTIMAL, INACCURATE) else None
        obj = float(res.obj_val) + sf.offset if x is not None else float("nan")
        return Solution(status=status, objective=obj, solve_time=elapsed, x=x, iterations=int(res.iterations))

    def prepare(self, sf: StandardForm) -> "ClarabelHandle":
        return ClarabelHandle(self, sf)


class ClarabelHandle:
    """A set-up Clarabel solver whose right-hand side can be swapped between solves."""

    def __init__(self, backend: ClarabelBackend, sf: StandardForm):
        self.backend = backend
        self.sf = sf
        settings = backend._settings()
        settings.presolve_enable = False
        self._solver = backend._clarabel.DefaultSolver(sf.P, sf.q, sf.A, sf.b, backend._cones(sf), settings)

    def solve(self, b: np.ndarray) -> Solution:
        t0 = time.perf_counter()
        self._solver.update(b=np.asarray(b, dtype=float))
        res = self._solver.solve()
        return self.backend._wrap(res, self.sf, time.perf_counter() - t0)


class CvxpyBackend:
    name = "cvxpy"

    _SOLVER_CONES = {
        "CLARABEL": FULL_CONES,
        "SCS": FULL_CONES,
        "CVXOPT": FULL_CONES,
        "ECOS": LEAN_CONES,
        "MOSEK": FULL_CONES,
    }

    def __init__(self, solver: str = "SCS", **kwargs):
        try:
            import cvxpy as cp
        except ImportError as exc:
            raise BackendUnavailableError("cvxpy is not installed") from exc
        if solver not in cp.installed_solvers():
            raise BackendUnavailableError(f"cvxpy solver {solver} is not installed")
        self.cp = cp
        self.solver = solver
        self.kwargs = kwargs
        self.cones = self._SOLVER_CONES.get(solver, LEAN_CONES)

    def solve_standard(self, sf: StandardForm, b=None) -> Solution:
        cp = self.cp
        b = sf.b if b is None else b
        n = sf.A.shape[1]
        x = cp.Variable(n)
        cons = []
        row = 0
        A = sf.A.tocsr()
        for kind, dim in sf.cones:
            m = dim * (dim + 1) // 2 if kind == PSD else dim
            Ai, bi = A[row : row + m], b[row : row + m]
            s = bi - Ai @ x
            if kind == ZERO:
                cons.append(s == 0)
            elif kind == NONNEG:
                cons.append(s >= 0)
            elif kind == SOC:
                cons.append(cp.SOC(s[0], s[1:]))
            else:
                T = sp.csr_matrix(_smat_operator(dim))
                M = cp.reshape(T @ s, (dim, dim), order="C")
                cons.append(cp.PSD(0.5 * (M + M.T)) if hasattr(cp, "PSD") else (0.5 * (M + M.T)) >> 0)
            row += m
        obj = sf.q @ x
        if sf.P.nnz:
            Pfull = sf.P + sp.triu(sf.P, k=1).T
            obj = obj + 0.5 * cp.quad_form(x, cp.psd_wrap(Pfull.toarray()))
        prob = cp.Problem(cp.Minimize(obj), cons)
        t0 = time.perf_counter()
        try:
            prob.solve(solver=self.solver, **self.kwargs)
        except cp.error.SolverError:
            return Solution(status=ERROR, solve_time=time.perf_counter() - t0)
        elapsed = time.perf_counter() - t0
        status = {
            cp.OPTIMAL: OPTIMAL,
            cp.OPTIMAL_INACCURATE: INACCURATE,
            cp.INFEASIBLE: INFEASIBLE,
            cp.INFEASIBLE_INACCURATE: INFEASIBLE,
            cp.UNBOUNDED: UNBOUNDED,
            cp.UNBOUNDED_INACCURATE: UNBOUNDED,
        }.get(prob.status, ERROR)
        xv = np.asarray(x.value) if status in (OPTIMAL, INACCURATE) and x.value is not None else None
        if xv is None and status in (OPTIMAL, INACCURATE):
            status = ERROR
        obj_val = float(prob.value) + sf.offset if xv is not None else float("nan")
        return Solution(status=status, objective=obj_val, solve_time=elapsed, x=xv)

    def prepare(self, sf: StandardForm):
        backend = self

        class _Handle:
            def solve(self, b):
                return backend.solve_standard(sf, b)

        return _Handle()


def _smat_operator(n: int) -> np.ndarray:
    """Matrix mapping svec to row-major vec of the symmetric matrix."""
    size = n * (n + 1) // 2
    T = np.zeros((n * n, size))
    for k in range(size):
        e = np.zeros(size)
        e[k] = 1.0
        T[:, k] = smat(e, n).reshape(-1)
    return T


_DEFAULT = None


def default_backend() -> ClarabelBackend:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = ClarabelBackend()
    return _DEFAULT


def finish(program: ConicProgram, sol: Solution, tol: float = FEASIBILITY_TOL) -> Solution:
    """Unpack values and re-verify the returned point against every constraint."""
    if sol.x is None:
        return sol
    sol.values = program.unpack(sol.x)
    sol.max_violation = program.max_violation(sol.x)
    if sol.status == OPTIMAL and sol.max_violation > tol:
        sol.status = INACCURATE
    return sol


def solve(program: ConicProgram, backend=None, tol: float = FEASIBILITY_TOL) -> Solution:
    """Compile, solve and post-check ``program``.

    The solution is downgraded to ``inaccurate`` when any constraint is
    violated by more than ``tol`` (PSD constraints: most negative eigenvalue).
    """
    backend = backend or default_backend()
    missing = program.cone_kinds - backend.cones
    if missing:
        raise BackendUnavailableError(f"backend {backend.name} cannot handle cones {sorted(missing)}")
    sf = program.compile()
    sol = backend.solve_standard(sf)
    return finish(program, sol, tol)
