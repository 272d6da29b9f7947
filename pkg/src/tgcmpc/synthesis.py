"""Offline syntheses: IMF cost, guaranteed-cost gain, approximate minimal RCI tube.

Both SDPs are solved in nondimensionalized coordinates. States are scaled by
``STATE_SCALE`` and each uncertainty channel ``i`` is rebalanced with a factor
``t_i`` (``Bw -> Bw t``, ``Cy -> Cy / t``) so that the tiny ``1 / (m vx)``
entries of ``Bw`` and the ``dC``-sized entries of ``Cy`` meet at a common
magnitude. The guaranteed-cost objective is ``trace(P)`` in the scaled
coordinates. A second solve in coordinates where the first ``P`` is the
identity sharpens ``K``; the result is returned in physical units. The tube
is not invariant under the output scaling, so ``MrciSolution`` keeps the
scaled ``Cy``/``Dyu``/``Bw`` it was built with.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_discrete_are, sqrtm

from . import conic
from .conic import ConicProgram, bmat
from .errors import InfeasibleSynthesisError, InvalidParameterError
from .vehicle import VERTEX_SIGNS, DiscreteModel, UncertaintyStructure

log = logging.getLogger(__name__)

STATE_SCALE = np.array([1.0, 0.1, 1.0, 0.5])  # e_y [m], e_psi [rad], v_y [m/s], r [rad/s]
LMI_TOL = 1e-7
GCC_MARGINS = (1e-9, 1e-8, 1e-7, 1e-6)
BUDGET_MARGIN = 1e-8  # keeps a_alpha + sum(a_sigma) <= 1 despite solver tolerance


# ---------------------------------------------------------------------------
# cost


@dataclass(frozen=True)
class CostSpec:
    tau: float
    W_imf: float
    W_delta: float
    Cc: np.ndarray
    Dcu: np.ndarray

    @property
    def Q(self) -> np.ndarray:
        return self.Cc.T @ self.Cc

    @property
    def N(self) -> np.ndarray:
        return self.Cc.T @ self.Dcu

    @property
    def R(self) -> np.ndarray:
        return self.Dcu.T @ self.Dcu


def build_cost(tau: float, W_imf: float, W_delta: float, A: np.ndarray, Bu: np.ndarray | None = None) -> CostSpec:
    """Implicit-model-following cost ``c = Cc x + Dcu u`` for a first-order cross-track model."""
    if not tau > 0:
        raise InvalidParameterError("tau must be positive")
    if not W_delta > 0:
        raise InvalidParameterError("W_delta must be positive")
    if not W_imf >= 0:
        raise InvalidParameterError("W_imf must be nonnegative")
    n = A.shape[0]
    Cbar = np.zeros((1, n))
    Cbar[0, 0] = 1.0
    if Bu is not None and np.abs(Cbar @ Bu).max() > 1e-12:
        raise InvalidParameterError("IMF cost needs a model whose cross-track row has no direct input")
    Cc = np.vstack([math.sqrt(W_imf) * Cbar @ (A + np.eye(n) / tau), np.zeros((1, n))])
    Dcu = np.array([[0.0], [math.sqrt(W_delta)]])
    return CostSpec(float(tau), float(W_imf), float(W_delta), Cc, Dcu)


# ---------------------------------------------------------------------------
# helpers


def _diag_expr(lam, sizes):
    """``diag(lam_1 I_{n_1}, ..., lam_s I_{n_s})`` as an expression."""
    n = int(sum(sizes))
    M = np.zeros((n * n, len(sizes)))
    j = 0
    for i, k in enumerate(sizes):
        for _ in range(k):
            M[j * n + j, i] = 1.0
            j += 1
    return (M @ lam).reshape((n, n))


def _blocks_diag(values, sizes) -> np.ndarray:
    return np.diag(np.repeat(np.asarray(values, dtype=float), sizes))


def channel_balance(Bw: np.ndarray, Cy: np.ndarray, Dyu: np.ndarray, structure: UncertaintyStructure) -> np.ndarray:
    """Per-block factors ``t`` equalizing ``||Bw_i t_i||`` and ``||[Cy Dyu]_i / t_i||``."""
    t = np.ones(structure.s)
    for i, (qs, ps) in enumerate(zip(structure.q_slices(), structure.p_slices())):
        out = np.linalg.norm(np.hstack([Cy[qs], Dyu[qs]]))
        inp = np.linalg.norm(Bw[:, ps])
        if out > 0 and inp > 0:
            t[i] = math.sqrt(out / inp)
    return t


@dataclass
class _Scaled:
    S: np.ndarray  # x = S x_scaled
    t: np.ndarray
    Ad: np.ndarray
    Bu: np.ndarray
    Bw: np.ndarray
    Cy: np.ndarray
    Dyu: np.ndarray
    Cc: np.ndarray | None
    Dc: np.ndarray | None


def _scale(d: DiscreteModel, cost: CostSpec | None, balance: bool = True, S=None) -> _Scaled:
    S = np.diag(STATE_SCALE) if S is None else np.asarray(S, dtype=float)
    Si = np.linalg.inv(S)
    st = d.structure
    t = channel_balance(d.Bdw, d.Cy, d.Dyu, st) if balance else np.ones(st.s)
    Tp = _blocks_diag(t, st.n_p)
    Tq = _blocks_diag(1.0 / t, st.n_q)
    return _Scaled(
        S=S,
        t=t,
        Ad=Si @ d.Ad @ S,
        Bu=Si @ d.Bdu,
        Bw=Si @ d.Bdw @ Tp,
        Cy=Tq @ d.Cy @ S,
        Dyu=Tq @ d.Dyu,
        Cc=None if cost is None else cost.Cc @ S,
        Dc=None if cost is None else cost.Dcu,
    )


def _sym(M):
    return 0.5 * (M + M.T)


# ---------------------------------------------------------------------------
# guaranteed cost


@dataclass
class GccSolution:
    K: np.ndarray
    P: np.ndarray
    Lambda_p: np.ndarray
    Lambda_q: np.ndarray
    objective: float
    lmi_residual: float
    vertex_radius: float
    status: str = "optimal"
    diagnostics: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def lam(self) -> np.ndarray:
        return np.diag(self.Lambda_p).copy()


def gcc_lmi(Ad, Bu, Bw, Cy, Dyu, Cc, Dc, X, Y, Lp, Lq):
    """Block matrix that must be negative semidefinite (numeric or expression inputs)."""
    Xbar = X - Bw @ Lp @ Bw.T
    return bmat(
        [
            [-Lq, None, None, Cy @ X - Dyu @ Y],
            [None, -np.eye(Cc.shape[0]), None, Cc @ X - Dc @ Y],
            [None, None, -Xbar, Ad @ X - Bu @ Y],
            [(Cy @ X - Dyu @ Y).T, (Cc @ X - Dc @ Y).T, (Ad @ X - Bu @ Y).T, -X],
        ]
    )


def gcc_lmi_numeric(Ad, Bu, Bw, Cy, Dyu, Cc, Dc, P, K, lam, structure) -> np.ndarray:
    X = np.linalg.inv(P)
    Y = K @ X
    Lp = _blocks_diag(lam, structure.n_p)
    Lq = _blocks_diag(lam, structure.n_q)
    Xbar = X - Bw @ Lp @ Bw.T
    Fy = Cy @ X - Dyu @ Y
    Fc = Cc @ X - Dc @ Y
    Fa = Ad @ X - Bu @ Y
    nq, nc, n = Cy.shape[0], Cc.shape[0], X.shape[0]
    Z = np.zeros
    return np.block(
        [
            [-Lq, Z((nq, nc)), Z((nq, n)), Fy],
            [Z((nc, nq)), -np.eye(nc), Z((nc, n)), Fc],
            [Z((n, nq)), Z((n, nc)), -Xbar, Fa],
            [Fy.T, Fc.T, Fa.T, -X],
        ]
    )


def vertex_spectral_radius(d: DiscreteModel, K: np.ndarray) -> float:
    rho = 0.0
    for signs in VERTEX_SIGNS:
        A, B = d.certain_matrices(signs)
        rho = max(rho, float(np.max(np.abs(np.linalg.eigvals(A - B @ K)))))
    return rho


def synthesize_gcc(
    d: DiscreteModel,
    cost: CostSpec,
    structure: UncertaintyStructure | None = None,
    margin: float | tuple = GCC_MARGINS,
    backend=None,
) -> GccSolution:
    """Guaranteed-cost state feedback ``u = -K x`` minimizing ``trace(P)``.

    ``margin`` asks the scaled LMI for ``<= -margin * I`` so the recovered
    physical-unit matrices keep the inequality despite solver roundoff. A
    tuple of margins is tried smallest first; the first solution passing the
    post-check wins. Small margins matter because ``K`` sits on a flat
    direction of the trace objective and drifts like the square root of the
    margin.
    """
    margins = (margin,) if np.isscalar(margin) else tuple(margin)
    last = None
    for mg in margins:
        try:
            first, ok = _synthesize_gcc(d, cost, structure, float(mg), backend)
            # Re-solve where the first P is the identity; trace(P) is kept as the objective.
            S = np.linalg.inv(np.linalg.cholesky(first.P)).T
            second, ok2 = _synthesize_gcc(d, cost, structure, float(mg), backend, S)
        except InfeasibleSynthesisError as exc:
            last = exc
            continue
        except np.linalg.LinAlgError:
            second, ok2 = None, False
        if ok2:
            return second
        if ok:
            return first
        last = InfeasibleSynthesisError("GCC post-check failed", d.vx_design, first.diagnostics)
    raise last


def _synthesize_gcc(d, cost, structure, margin, backend, S=None) -> tuple[GccSolution, bool]:
    """One SDP solve in the coordinates ``x = S x_s``. Returns the solution and whether it passes the post-check."""
    st = structure or d.structure
    sc = _scale(d, cost, S=S)
    n, m = sc.Bu.shape
    nq, nc = sc.Cy.shape[0], sc.Cc.shape[0]
    S0 = np.diag(STATE_SCALE)
    S_inv = np.linalg.inv(sc.S)
    W = S_inv @ S0 @ S0 @ S_inv.T  # trace(S0 P S0) in these coordinates

    prog = ConicProgram("gcc")
    X = prog.variable("X", (n, n), symmetric=True)
    Z = prog.variable("Z", (n, n), symmetric=True)
    Y = prog.variable("Y", (m, n))
    lam = prog.variable("lam", (st.s,))
    Lp = _diag_expr(lam, st.n_p)
    Lq = _diag_expr(lam, st.n_q)

    prog.add_nsd(bmat([[-Z, np.eye(n)], [np.eye(n), -X]]), "trace-bound")
    L = gcc_lmi(sc.Ad, sc.Bu, sc.Bw, sc.Cy, sc.Dyu, sc.Cc, sc.Dc, X, Y, Lp, Lq)
    size = nq + nc + 2 * n
    prog.add_nsd(L + margin * np.eye(size), "gcc")
    prog.add_nonneg(lam, "lam>=0")
    prog.minimize((W @ Z).trace())

    sol = conic.solve(prog, backend, tol=1e-6)
    if not sol.ok:
        raise InfeasibleSynthesisError(f"GCC SDP {sol.status}", d.vx_design, {"status": sol.status})

    Xs, Ys = sol["X"], sol["Y"].reshape(m, n)
    lam_s = np.asarray(sol["lam"]).reshape(-1)
    Ps = np.linalg.inv(Xs)

    def resid(K_):
        M = gcc_lmi_numeric(sc.Ad, sc.Bu, sc.Bw, sc.Cy, sc.Dyu, sc.Cc, sc.Dc, Ps, K_, lam_s, st)
        return float(np.linalg.eigvalsh(_sym(M))[-1])

    Ks, residual = Ys @ Ps, None
    try:
        Kc = completed_square_gain(sc, Xs, lam_s, st)
    except np.linalg.LinAlgError:
        Kc = None
    if Kc is not None and np.all(np.isfinite(Kc)):
        r_solver, r_polish = resid(Ks), resid(Kc)
        Ks, residual = (Kc, r_polish) if r_polish <= max(r_solver, 0.0) else (Ks, r_solver)
    if residual is None:
        residual = resid(Ks)
    K = Ks @ S_inv
    P = _sym(S_inv.T @ Ps @ S_inv)
    lam_phys = lam_s * sc.t**2

    rho = vertex_spectral_radius(d, K)
    diag = {"lmi_residual": residual, "vertex_radius": rho, "cond_X": float(np.linalg.cond(Xs))}
    g = GccSolution(
        K=K,
        P=P,
        Lambda_p=_blocks_diag(lam_phys, st.n_p),
        Lambda_q=_blocks_diag(lam_phys, st.n_q),
        objective=float(np.trace(P)),
        lmi_residual=residual,
        vertex_radius=rho,
        status=sol.status,
        diagnostics=diag,
    )
    return g, residual <= LMI_TOL and rho < 1.0


def completed_square_gain(sc: _Scaled, X: np.ndarray, lam: np.ndarray, structure: UncertaintyStructure) -> np.ndarray:
    """Gain minimizing the Schur complement of the GCC LMI for fixed ``X`` and multipliers.

    The complement is quadratic in ``K`` with Hessian ``R + Bu' Xbar^-1 Bu +
    Dyu' Lq^-1 Dyu``, so its minimizer is never worse, in the Loewner order,
    than whatever gain the solver returned alongside ``X``.
    """
    Lp = _blocks_diag(lam, structure.n_p)
    lq = np.maximum(np.repeat(lam, structure.n_q), 1e-300)
    Xbar_inv = np.linalg.inv(_sym(X - sc.Bw @ Lp @ sc.Bw.T))
    Bu, Dy, Dc = sc.Bu, sc.Dyu, sc.Dc
    G = Dc.T @ Dc + Bu.T @ Xbar_inv @ Bu + Dy.T @ (Dy / lq[:, None])
    h = Dc.T @ sc.Cc + Bu.T @ Xbar_inv @ sc.Ad + Dy.T @ (sc.Cy / lq[:, None])
    return np.linalg.solve(G, h)


def guaranteed_cost_decrease(d: DiscreteModel, cost: CostSpec, g: GccSolution) -> float:
    """Largest eigenvalue of ``A_i' P A_i - P + C_i' C_i`` over the vertex closed loops (must be <= 0)."""
    Ccl = cost.Cc - cost.Dcu @ g.K
    worst = -np.inf
    for signs in VERTEX_SIGNS:
        A, B = d.certain_matrices(signs)
        Acl = A - B @ g.K
        M = Acl.T @ g.P @ Acl - g.P + Ccl.T @ Ccl
        worst = max(worst, float(np.linalg.eigvalsh(_sym(M))[-1]))
    return worst


def lqr_riccati(A, B, Q, R, N=None, tol: float = 1e-13, max_iter: int = 100000):
    """Discrete LQR by fixed-point Riccati iteration. Returns ``(K, P)`` with ``u = -K x``."""
    N = np.zeros((A.shape[0], B.shape[1])) if N is None else N
    P = Q.copy()
    for _ in range(max_iter):
        G = R + B.T @ P @ B
        K = np.linalg.solve(G, B.T @ P @ A + N.T)
        P_new = Q + A.T @ P @ A - (A.T @ P @ B + N) @ K
        P_new = _sym(P_new)
        if np.max(np.abs(P_new - P)) <= tol * max(1.0, np.max(np.abs(P))):
            P = P_new
            break
        P = P_new
    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A + N.T)
    return K, P


def lqr_dare(A, B, Q, R, N=None):
    P = solve_discrete_are(A, B, Q, R, s=N)
    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A + (N.T if N is not None else 0))
    return K, P


# ---------------------------------------------------------------------------
# approximate minimal RCI tube


@dataclass
class MrciSolution:
    E_R: np.ndarray
    K_R: np.ndarray
    a_alpha: float
    a_sigma: np.ndarray
    upsilon: np.ndarray
    objective: float
    Cy: np.ndarray  # output map the tube was certified with (channel-scaled)
    Dyu: np.ndarray
    Bw: np.ndarray
    t: np.ndarray = field(default_factory=lambda: np.ones(2))

    @property
    def E_inv_sqrt(self) -> np.ndarray:
        return _inv_sqrt(self.E_R)


def _inv_sqrt(E: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(_sym(E))
    return _sym(V @ np.diag(1.0 / np.sqrt(w)) @ V.T)


def mrci_lmis(Ad, Bu, Bw, Cy, Dyu, X, Y, Up, a_alpha, structure):
    n = Ad.shape[0]
    nw = Bw.shape[1]
    L1 = bmat(
        [
            [-X, Ad @ X - Bu @ Y, Bw @ Up],
            [(Ad @ X - Bu @ Y).T, -a_alpha * X, np.zeros((n, nw))],
            [(Bw @ Up).T, None, -Up],
        ]
    )
    L2 = []
    for qs in structure.q_slices():
        F = Cy[qs] @ X - Dyu[qs] @ Y
        k = qs.stop - qs.start
        L2.append(bmat([[-np.eye(k), F], [F.T, -X]]))
    return L1, L2


def synthesize_mrci(
    d: DiscreteModel,
    a_alpha: float,
    structure: UncertaintyStructure | None = None,
    backend=None,
    margin: float = 1e-9,
) -> MrciSolution:
    """Ellipsoidal tube ``{e | e' E_R e <= 1}`` with feedback ``K_R`` for a fixed ``a_alpha``."""
    if not 0 < a_alpha < 1:
        raise InvalidParameterError("a_alpha must lie in (0, 1)")
    st = structure or d.structure
    sc = _scale(d, None)
    n, m = sc.Bu.shape

    prog = ConicProgram("mrci")
    X = prog.variable("X", (n, n), symmetric=True)
    Y = prog.variable("Y", (m, n))
    ups = prog.variable("upsilon", (st.s,))
    a_sig = prog.variable("a_sigma", (st.s,))
    Up = _diag_expr(ups, st.n_p)
    L1, L2 = mrci_lmis(sc.Ad, sc.Bu, sc.Bw, sc.Cy, sc.Dyu, X, Y, Up, a_alpha, st)
    prog.add_nsd(L1 + margin * np.eye(L1.shape[0]), "tube")
    for i, L in enumerate(L2):
        prog.add_nsd(L + margin * np.eye(L.shape[0]), f"output{i}")
    for i in range(st.s):
        prog.add_nsd(bmat([[-ups[i].reshape((1, 1)), np.ones((1, 1))], [np.ones((1, 1)), -a_sig[i].reshape((1, 1))]]), f"sigma{i}")
    prog.add_nonneg(1.0 - BUDGET_MARGIN - a_alpha - a_sig.sum(), "budget")
    prog.add_nonneg(ups, "upsilon>=0")
    prog.minimize(X.trace())

    sol = conic.solve(prog, backend, tol=1e-6)
    if not sol.ok:
        raise InfeasibleSynthesisError(f"mRCI SDP {sol.status} at a_alpha={a_alpha:.4f}", d.vx_design, {"status": sol.status})
    Xs = sol["X"]
    Ks = sol["Y"].reshape(m, n) @ np.linalg.inv(Xs)
    S_inv = np.diag(1.0 / STATE_SCALE)
    E_R = _sym(S_inv @ np.linalg.inv(Xs) @ S_inv)
    K_R = Ks @ S_inv
    # Tube maps in physical states, channel-scaled outputs.
    Tp = _blocks_diag(sc.t, st.n_p)
    Tq = _blocks_diag(1.0 / sc.t, st.n_q)
    return MrciSolution(
        E_R=E_R,
        K_R=K_R,
        a_alpha=float(a_alpha),
        a_sigma=np.asarray(sol["a_sigma"], dtype=float).reshape(-1),
        upsilon=np.asarray(sol["upsilon"], dtype=float).reshape(-1),
        objective=float(np.trace(Xs)),
        Cy=Tq @ d.Cy,
        Dyu=Tq @ d.Dyu,
        Bw=d.Bdw @ Tp,
        t=sc.t.copy(),
    )


def mrci_residuals(d: DiscreteModel, sol: MrciSolution, structure: UncertaintyStructure | None = None) -> dict:
    """Re-assemble the tube LMIs from stored (physical-state) data; values are max eigenvalues."""
    st = structure or d.structure
    X = np.linalg.inv(sol.E_R)
    Y = sol.K_R @ X
    Up = _blocks_diag(sol.upsilon, st.n_p)
    n, nw = X.shape[0], sol.Bw.shape[1]
    A_R = d.Ad @ X - d.Bdu @ Y
    L1 = np.block(
        [
            [-X, A_R, sol.Bw @ Up],
            [A_R.T, -sol.a_alpha * X, np.zeros((n, nw))],
            [(sol.Bw @ Up).T, np.zeros((nw, n)), -Up],
        ]
    )
    # Compare in the synthesis scaling so the tolerance is meaningful.
    S = np.diag(np.concatenate([1.0 / STATE_SCALE, 1.0 / STATE_SCALE, np.ones(nw)]))
    out = {"tube": float(np.linalg.eigvalsh(_sym(S @ L1 @ S))[-1])}
    Sx = np.diag(1.0 / STATE_SCALE)
    for i, qs in enumerate(st.q_slices()):
        F = (sol.Cy[qs] @ X - sol.Dyu[qs] @ Y) @ Sx
        k = qs.stop - qs.start
        L2 = np.block([[-np.eye(k), F], [F.T, -Sx @ X @ Sx]])
        out[f"output{i}"] = float(np.linalg.eigvalsh(_sym(L2))[-1])
    for i in range(st.s):
        out[f"sigma{i}"] = float(np.linalg.eigvalsh(np.array([[-sol.upsilon[i], 1.0], [1.0, -sol.a_sigma[i]]]))[-1])
    out["budget"] = float(sol.a_alpha + sol.a_sigma.sum() - 1.0)
    return out


def golden_section(f, lo: float, hi: float, tol: float = 1e-3):
    """Minimize a unimodal ``f`` on ``[lo, hi]``; infeasible points evaluate to ``inf``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    cache = {}

    def F(x):
        if x not in cache:
            cache[x] = f(x)
        return cache[x]

    a, b = lo, hi
    c = b - invphi * (b - a)
    e = a + invphi * (b - a)
    while b - a > tol:
        if F(c) <= F(e):
            b, e = e, c
            c = b - invphi * (b - a)
        else:
            a, c = c, e
            e = a + invphi * (b - a)
    best = min(cache, key=cache.get)
    return best, cache[best], cache


def search_mrci(
    d: DiscreteModel,
    lo: float = 0.05,
    hi: float = 0.95,
    tol: float = 1e-3,
    coarse: float = 0.05,
    backend=None,
) -> MrciSolution:
    """Minimize the tube trace over ``a_alpha``.

    The feasible window in ``a_alpha`` can be narrower than the search
    interval, so a coarse grid first brackets the best feasible point and a
    golden-section search then refines it inside that bracket.
    """
    sols = {}

    def f(a):
        if a in sols:
            return sols[a].objective
        try:
            s = synthesize_mrci(d, a, backend=backend)
        except InfeasibleSynthesisError:
            return math.inf
        sols[a] = s
        return s.objective

    grid = np.arange(lo, hi + 1e-12, coarse)
    vals = [f(float(a)) for a in grid]
    if not np.isfinite(vals).any():
        # The window may sit between grid points; fall back to a finer sweep.
        grid = np.arange(lo, hi + 1e-12, coarse / 5)
        vals = [f(float(a)) for a in grid]
    if not np.isfinite(vals).any():
        raise InfeasibleSynthesisError("no feasible a_alpha in the search interval", d.vx_design)
    i = int(np.argmin(vals))
    step = grid[1] - grid[0]
    golden_section(f, max(lo, grid[i] - step), min(hi, grid[i] + step), tol)
    best = min(sols, key=lambda a: sols[a].objective)
    return sols[best]


# ---------------------------------------------------------------------------
# online weights


def rbar_matrices(d: DiscreteModel, cost: CostSpec, g: GccSolution):
    """Quadratic form of the one-step bound in ``(x, nu)`` under ``u = -K x + nu``.

    Returns ``(M_xx, M_xv, M_vv)`` where, for every admissible uncertainty,
    ``V(x+) + |c|^2 <= [x; nu]' [[M_xx, M_xv], [M_xv', M_vv]] [x; nu]``.
    """
    Lp, Lq = g.Lambda_p, g.Lambda_q
    Xbar = np.linalg.inv(g.P) - d.Bdw @ Lp @ d.Bdw.T
    Xbi = np.linalg.inv(_sym(Xbar))
    lq_inv = np.linalg.pinv(Lq)
    Acl = d.Ad - d.Bdu @ g.K
    Ccl = cost.Cc - cost.Dcu @ g.K
    Cycl = d.Cy - d.Dyu @ g.K
    M_xx = Acl.T @ Xbi @ Acl + Ccl.T @ Ccl + Cycl.T @ lq_inv @ Cycl
    M_xv = Acl.T @ Xbi @ d.Bdu + Ccl.T @ cost.Dcu + Cycl.T @ lq_inv @ d.Dyu
    M_vv = cost.R + d.Bdu.T @ Xbi @ d.Bdu + d.Dyu.T @ lq_inv @ d.Dyu
    return _sym(M_xx), M_xv, _sym(M_vv)


def rbar_default(d: DiscreteModel, cost: CostSpec, g: GccSolution) -> np.ndarray:
    return rbar_matrices(d, cost, g)[2]


def matrix_sqrt(M: np.ndarray) -> np.ndarray:
    return np.real(sqrtm(_sym(M)))
