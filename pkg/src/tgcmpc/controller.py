"""Online tube guaranteed-cost MPC.

Each control period solves a small SOCP over a nominal trajectory ``z``, the
input correction ``nu`` and the tube scalings ``alpha``; the applied command
is ``-K x0 + nu_0``. The program structure is compiled once per bank entry
and horizon, and only the right-hand side (initial state and curvature
feedforward) changes between solves.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .bank import BankEntry, ControllerBank
from .conic import INFEASIBLE, ClarabelBackend, ConicProgram, concat, vstack
from .errors import DimensionMismatchError, EmptySetError, InvalidParameterError

HORIZON = 10
SLACK_LINEAR = 1e4
SLACK_QUADRATIC = 1e6
SOLVE_BUDGET = 0.020  # s
SLACK_TOL = 1e-6
SLACK_SCALE = 1e3
# Refinement roughly doubles the per-solve cost at this size without changing
# the returned optimum beyond 1e-8.
ONLINE_SETTINGS = dict(iterative_refinement_enable=False)

SLIP_ROWS = (0, 1, 3, 4)  # envelope rows on the states; 2 and 5 are the actuator rows
ACT_ROWS = (2, 5)

# step status values
OK = "optimal"
INACCURATE = "inaccurate"
FALLBACK = "fallback"
TIMEOUT = "timeout"


@dataclass
class MpcStepInput:
    x0: np.ndarray
    vx: float
    kappa_preview: np.ndarray
    entry: BankEntry | None = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        self.kappa_preview = np.asarray(self.kappa_preview, dtype=float).reshape(-1)
        if self.x0.size != 4:
            raise DimensionMismatchError(f"x0 must have 4 entries, got {self.x0.size}")
        if not np.all(np.isfinite(self.x0)):
            raise InvalidParameterError("x0 must be finite")


@dataclass
class MpcStepOutput:
    delta_cmd: float
    z: np.ndarray
    nu: np.ndarray
    alpha: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    slack: np.ndarray
    status: str
    solve_time: float
    objective: float  # dx0'P dx0 + sum gamma^2, dx0 measured from the cornering equilibrium
    penalty: float = 0.0
    vx_entry: float = float("nan")
    clamped: bool = False
    overrun: bool = False

    @property
    def slack_max(self) -> float:
        return float(np.max(self.slack, initial=0.0))


class StepProgram:
    """Compiled SOCP for one bank entry and horizon."""

    def __init__(self, entry: BankEntry, N: int = HORIZON, backend=None, time_limit: float | None = None):
        if N < 1:
            raise InvalidParameterError("horizon must be at least 1")
        self.entry = entry
        self.N = N
        self.program, self.layout = build_step_program(entry, N)
        self.sf = self.program.compile()
        backend = backend or ClarabelBackend(**ONLINE_SETTINGS)
        if time_limit is not None:
            backend = type(backend)(**{**backend.settings, "time_limit": float(time_limit)})
        self.backend = backend
        self.handle = backend.prepare(self.sf)
        self._P = entry.gcc.P
        self._K = entry.gcc.K[0]
        self._Br = entry.model.Bdr[:, 0]
        t = entry.mrci
        self._alpha_w = np.sqrt(np.concatenate([[t.a_alpha], np.ravel(t.a_sigma)]))

        self._x_ss, self._nu_ss = cornering_equilibrium(entry)

    def rhs(self, x0: np.ndarray, kappa: np.ndarray) -> np.ndarray:
        ff = np.outer(kappa, self._Br)
        return self.sf.rhs(x0=x0, feedforward=ff, nu_ff=self._nu_ss * kappa)

    def solve(self, x0, kappa) -> tuple:
        sol = self.handle.solve(self.rhs(x0, kappa))
        return sol, (self.program.unpack(sol.x) if sol.x is not None else None)


def cornering_equilibrium(entry: BankEntry):
    """Per unit curvature: the steady state with zero cross-track error and the ``nu`` holding it.

    Solves ``x = Ad x + Bu u + Br kappa`` with ``e_y = 0`` on the nominal
    model; returns ``(x_ss, nu_ss)`` such that the equilibrium for curvature
    ``kappa`` is ``kappa * x_ss`` under ``u = -K x + kappa * nu_ss``.
    """
    d = entry.model
    n = d.Ad.shape[0]
    M = np.hstack([(d.Ad - np.eye(n))[:, 1:], d.Bdu])
    sol = np.linalg.solve(M, -d.Bdr[:, 0])
    x_ss = np.concatenate([[0.0], sol[: n - 1]])
    u_ss = float(sol[n - 1])
    return x_ss, u_ss + float(entry.gcc.K[0] @ x_ss)


def _kappa_window(kappa, N):
    kappa = np.asarray(kappa, dtype=float).reshape(-1)
    if kappa.size == 0:
        return np.zeros(N)
    if kappa.size >= N:
        return kappa[:N]
    return np.concatenate([kappa, np.full(N - kappa.size, kappa[-1])])


def build_step_program(entry: BankEntry, N: int = HORIZON):
    """Assemble the online SOCP for ``entry``.

    Returns ``(program, layout)``. The pins ``x0`` (4 values),
    ``feedforward`` (``N x 4`` rows of ``Bd_r * kappa_k``) and ``nu_ff``
    (the input correction holding the cornering equilibrium of each
    ``kappa_k``) carry the per-step data. The input cost is measured from
    ``nu_ff``, so on a straight it is the plain ``||Rbar^(1/2) nu||``.
    """
    d, g, t, T = entry.model, entry.gcc, entry.mrci, entry.tight
    n = d.Ad.shape[0]
    K = g.K
    Acl = d.Ad - d.Bdu @ K
    Bu = d.Bdu[:, 0]
    s = T.Cy_bar.shape[0]
    nN = T.H_N.shape[0]

    prog = ConicProgram(f"tgcmpc@{entry.vx:g}")
    z = prog.variable("z", (N + 1, n))
    nu = prog.variable("nu", (N,))
    alpha = prog.variable("alpha", (N + 1,))
    sigma = prog.variable("sigma", (N, s))
    gamma = prog.variable("gamma", (N,))
    nu_ff = prog.variable("nu_ff", (N,))
    # slack variables are stored as SLACK_SCALE * s to keep the penalty well scaled
    s_slip = prog.variable("s_slip", (N, len(SLIP_ROWS)))
    s_act = prog.variable("s_act", (max(N - 1, 1), len(ACT_ROWS)))
    s_term = prog.variable("s_term", (nN,))
    inv = 1.0 / SLACK_SCALE

    prog.pin("x0", z[0], np.zeros(n))
    prog.add_zero(alpha[0], "alpha0")
    prog.pin("nu_ff", nu_ff, np.zeros(N))
    ff_rows = []
    for k in range(N):
        ff_rows.append(z[k + 1] - Acl @ z[k] - Bu * nu[k])
    prog.pin("feedforward", vstack([r.reshape((1, n)) for r in ff_rows]), np.zeros((N, n)))

    sqa = math.sqrt(t.a_alpha)
    sqs = np.sqrt(np.asarray(t.a_sigma, dtype=float).reshape(-1))
    sqR = float(np.sqrt(T.Rbar[0, 0]))
    for k in range(N):
        # tube growth
        parts = [alpha[k] * sqa] + [sigma[k, i] * sqs[i] for i in range(s)]
        prog.add_soc(alpha[k + 1], concat(parts), f"alpha{k + 1}")
        for i in range(s):
            out = T.Cy_bar[i] @ z[k] + nu[k] * T.Dyu[i]
            bound = sigma[k, i] - alpha[k] * T.Cy_alpha[i]
            prog.add_nonneg(bound - out, f"sigma{k},{i}+")
            prog.add_nonneg(bound + out, f"sigma{k},{i}-")
        # cost epigraph
        dnu = nu[k] - nu_ff[k]
        prog.add_nonneg(gamma[k] - alpha[k] * T.gamma_alpha - dnu * sqR, f"gamma{k}+")
        prog.add_nonneg(gamma[k] - alpha[k] * T.gamma_alpha + dnu * sqR, f"gamma{k}-")
        # tightened envelope rows
        for j, r in enumerate(SLIP_ROWS):
            lhs = T.H_bar[r] @ z[k] + nu[k] * T.H_u[r] + alpha[k] * T.path_radii[r]
            prog.add_nonneg(T.g[r] + s_slip[k, j] * inv - lhs, f"slip{k},{r}")
        for j, r in enumerate(ACT_ROWS):
            lhs = T.H_bar[r] @ z[k] + nu[k] * T.H_u[r] + alpha[k] * T.path_radii[r]
            rhs = T.g[r] if k == 0 else T.g[r] + s_act[k - 1, j] * inv
            prog.add_nonneg(rhs - lhs, f"act{k},{r}")
    term = T.H_N @ z[N] + alpha[N] * T.terminal_radii
    prog.add_nonneg(T.g_N + s_term * inv - term, "terminal")
    prog.add_nonneg(s_slip, "s_slip>=0")
    prog.add_nonneg(s_act, "s_act>=0")
    prog.add_nonneg(s_term, "s_term>=0")

    slacks = [s_slip.flatten(), s_act.flatten(), s_term]
    lin = concat(slacks).sum() * (SLACK_LINEAR * inv)
    squares = [gamma] + [sl * (math.sqrt(SLACK_QUADRATIC) * inv) for sl in slacks]
    prog.minimize(lin, squares)
    return prog, dict(N=N, n=n, s=s, n_terminal=nN)


def _stack_slack(v: dict, N: int) -> np.ndarray:
    s_act = v["s_act"] if N > 1 else np.zeros((0, len(ACT_ROWS)))
    return np.concatenate([np.ravel(v["s_slip"]), np.ravel(s_act), np.ravel(v["s_term"])]) / SLACK_SCALE


class TubeMpc:
    """Receding-horizon controller over a ``ControllerBank``.

    ``deterministic=True`` never aborts on wall time; solves slower than the
    budget are only flagged (``overrun``) so that repeated runs are
    reproducible. Otherwise a solve exceeding ``budget`` falls back to the
    guaranteed-cost law.
    """

    def __init__(
        self,
        bank: ControllerBank,
        N: int = HORIZON,
        budget: float = SOLVE_BUDGET,
        deterministic: bool = False,
        backend=None,
    ):
        if len(bank) == 0:
            raise EmptySetError("controller bank is empty")
        self.bank = bank
        self.N = N
        self.budget = budget
        self.deterministic = deterministic
        self.backend = backend
        self._programs: dict[float, StepProgram] = {}

    def program(self, entry: BankEntry) -> StepProgram:
        sp = self._programs.get(entry.vx)
        if sp is None:
            limit = None if self.deterministic else self.budget
            sp = StepProgram(entry, self.N, self.backend, time_limit=limit)
            self._programs[entry.vx] = sp
        return sp

    def schedule(self, vx: float):
        return schedule(self.bank, vx)

    def step(self, inp: MpcStepInput) -> MpcStepOutput:
        if inp.entry is None:
            entry, clamped = schedule(self.bank, inp.vx)
        else:
            entry, clamped = inp.entry, False
        return solve_step(self.program(entry), inp.x0, inp.kappa_preview, self.budget, self.deterministic, clamped)


def schedule(bank: ControllerBank, vx: float):
    """Nearest bank entry (ties toward the higher speed) and an out-of-range flag."""
    return bank.lookup(float(vx))


def fallback_command(entry: BankEntry, x0) -> float:
    u = -float(entry.gcc.K[0] @ np.asarray(x0, dtype=float))
    return float(np.clip(u, -entry.delta_max, entry.delta_max))


def solve_step(
    sp: StepProgram,
    x0,
    kappa,
    budget: float = SOLVE_BUDGET,
    deterministic: bool = False,
    clamped: bool = False,
) -> MpcStepOutput:
    entry, N = sp.entry, sp.N
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    kappa = _kappa_window(kappa, N)
    t0 = time.perf_counter()
    sol, v = sp.solve(x0, kappa)
    elapsed = time.perf_counter() - t0
    overrun = elapsed > budget
    dx0 = x0 - sp._x_ss * kappa[0]
    base = float(dx0 @ sp._P @ dx0)
    if v is None or not sol.ok or (overrun and not deterministic):
        status = TIMEOUT if (overrun and not deterministic) or sol.status == "error" else FALLBACK
        if sol.status == INFEASIBLE:
            status = FALLBACK
        nan = np.full(N, np.nan)
        return MpcStepOutput(
            delta_cmd=fallback_command(entry, x0),
            z=np.full((N + 1, x0.size), np.nan),
            nu=nan,
            alpha=np.full(N + 1, np.nan),
            sigma=np.full((N, entry.tight.Cy_bar.shape[0]), np.nan),
            gamma=nan.copy(),
            slack=np.zeros(0),
            status=status,
            solve_time=elapsed,
            objective=float("nan"),
            vx_entry=entry.vx,
            clamped=clamped,
            overrun=overrun,
        )
    nu = np.atleast_1d(v["nu"]).astype(float)
    sigma = np.asarray(v["sigma"]).reshape(N, -1)
    alpha = np.atleast_1d(v["alpha"]).astype(float)
    # sigma_{N-1} and alpha_N only enter the terminal rows, where any larger
    # value is also feasible; report the tight ones
    T = entry.tight
    z = np.asarray(v["z"]).reshape(N + 1, -1)
    sigma[N - 1] = np.abs(T.Cy_bar @ z[N - 1] + T.Dyu * nu[N - 1]) + T.Cy_alpha * alpha[N - 1]
    alpha[N] = float(np.linalg.norm(sp._alpha_w * np.concatenate([[alpha[N - 1]], sigma[N - 1]])))
    gamma = np.atleast_1d(v["gamma"]).astype(float)
    slack = np.maximum(_stack_slack(v, N), 0.0)
    u = -float(sp._K @ x0) + float(nu[0])
    u = float(np.clip(u, -entry.delta_max, entry.delta_max))
    obj = base + float(gamma @ gamma)
    penalty = float(SLACK_LINEAR * slack.sum() + SLACK_QUADRATIC * slack @ slack)
    return MpcStepOutput(
        delta_cmd=u,
        z=z,
        nu=nu,
        alpha=alpha,
        sigma=sigma,
        gamma=gamma,
        slack=slack,
        status=OK if sol.status == "optimal" else INACCURATE,
        solve_time=elapsed,
        objective=obj,
        penalty=penalty,
        vx_entry=entry.vx,
        clamped=clamped,
        overrun=overrun,
    )


# ---------------------------------------------------------------------------
# step log

LOG_COLUMNS = (
    ["t", "vx"]
    + [f"x0_{i}" for i in range(4)]
    + ["delta_cmd", "objective", "alpha_max", "slack_max", "status", "solve_ms"]
)


@dataclass
class StepLog:
    rows: list = field(default_factory=list)

    def record(self, t: float, vx: float, x0, out: MpcStepOutput) -> None:
        alpha_max = float(np.nanmax(out.alpha)) if np.any(np.isfinite(out.alpha)) else float("nan")
        self.rows.append(
            [t, vx, *np.asarray(x0, dtype=float).tolist(), out.delta_cmd, out.objective, alpha_max, out.slack_max, out.status, out.solve_time * 1e3]
        )

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LOG_COLUMNS)
            for row in self.rows:
                w.writerow([repr(x) if isinstance(x, float) else x for x in row])
