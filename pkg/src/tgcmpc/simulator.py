"""Closed-loop nonlinear simulation of the tube MPC on a route."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import kernels
from .bank import ControllerBank
from .controller import HORIZON, TubeMpc, solve_step
from .errors import InvalidParameterError
from .route import Route, frenet_errors, project
from .tire import TireParams, derive
from .vehicle import MIN_TRUTH_SPEED, VehicleParams

DEFAULT_NOISE = (0.01, 0.002, 0.05, 0.005)  # e_y, e_psi, v_y, r


@dataclass
class SimConfig:
    dt_truth: float = 0.001
    Ts: float = 0.025
    noise_std: tuple = DEFAULT_NOISE
    noise: bool = True
    e_y0: float = 0.0
    e_psi0: float = 0.0
    vx0: float | None = None  # defaults to the reference speed at the start
    vy0: float = 0.0
    r0: float = 0.0
    yaw_moment: float = 0.0  # additive disturbance [N m]
    lateral_force: float = 0.0  # additive disturbance [N]
    delay_steps: int = 0
    kp: float = 0.8
    ki: float = 0.2
    t_max: float | None = None
    beta_abort_deg: float = 30.0
    ey_abort: float = 10.0
    horizon: int = HORIZON
    deterministic: bool = True
    exceed_factor: float = 1.1

    def __post_init__(self):
        if not (self.dt_truth > 0 and self.Ts > 0):
            raise InvalidParameterError("time steps must be positive")
        n = round(self.Ts / self.dt_truth)
        if n < 1 or abs(n * self.dt_truth - self.Ts) > 1e-9 * self.Ts:
            raise InvalidParameterError("integration step must divide the control period")
        if len(self.noise_std) != 4 or any(s < 0 for s in self.noise_std):
            raise InvalidParameterError("noise_std needs four nonnegative entries")
        if self.delay_steps < 0:
            raise InvalidParameterError("delay_steps must be nonnegative")

    @property
    def substeps(self) -> int:
        return round(self.Ts / self.dt_truth)


TRACE_COLUMNS = (
    "t", "s", "segment", "vx", "vy", "r", "X", "Y", "psi", "e_y", "e_psi", "kappa",
    "alpha_f", "alpha_r", "Fyf", "Fyr", "Fxf", "delta", "ax", "ay",
    "mpc_status", "solve_ms", "slack_max", "objective", "vx_entry", "clamped",
)
TIMING_COLUMNS = ("solve_ms",)


@dataclass
class Trace:
    columns: dict
    terminated: bool = False
    cause: str = ""
    seed: int | None = None
    config: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.columns["t"])

    def __getitem__(self, name):
        return self.columns[name]

    def write(self, path) -> None:
        """CSV with a header row plus a ``.json`` sidecar holding config and seed.

        Wall-clock columns are left out so equal seeds give identical files.
        """
        cols = [c for c in TRACE_COLUMNS if c not in TIMING_COLUMNS]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for i in range(len(self)):
                w.writerow([_fmt(self.columns[c][i]) for c in cols])
        sidecar = dict(config=self.config, seed=self.seed, terminated=self.terminated, cause=self.cause, meta=self.meta)
        with open(str(path) + ".json", "w") as fh:
            json.dump(sidecar, fh, indent=1, sort_keys=True)


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    return x


def perturbed_tires(p: VehicleParams, u_front: float, u_rear: float):
    """Truth tires with stiffness ``C + u * (C - C_peak) / 2``, ``u`` in [-1, 1]."""
    out = []
    for tp, td, u in ((p.front, p.tires()[0], u_front), (p.rear, p.tires()[1], u_rear)):
        if not -1.0 <= u <= 1.0:
            raise InvalidParameterError("stiffness perturbation must lie in [-1, 1]")
        out.append(derive(TireParams(C=tp.C + u * td.dC, mu=tp.mu, R_mu=tp.R_mu, Fz=tp.Fz)))
    return tuple(out)


def _value(hook, t):
    return float(hook(t)) if callable(hook) else float(hook)


def simulate(
    p: VehicleParams,
    bank: ControllerBank,
    route: Route,
    cfg: SimConfig = SimConfig(),
    seed: int | None = 0,
    tires=None,
    mpc: TubeMpc | None = None,
) -> Trace:
    """Run one closed-loop simulation and return its trace.

    ``tires`` overrides the truth-model tires (the controller keeps the
    nominal ones). Spin-outs and off-route excursions end the run early with
    ``terminated=True``.
    """
    rng = np.random.default_rng(seed)
    mpc = mpc or TubeMpc(bank, N=cfg.horizon, deterministic=cfg.deterministic)
    truth_tires = tires if tires is not None else p.tires()
    veh = kernels.pack_vehicle(p, truth_tires)
    nominal = p.tires()
    peaks = (nominal[0].alpha_peak, nominal[1].alpha_peak)
    front_limit = p.mu * p.front.Fz
    noise = np.asarray(cfg.noise_std, dtype=float) if cfg.noise else np.zeros(4)
    n_sub = cfg.substeps

    x_ref, y_ref, th_ref = route.pose(0.0)
    vx0 = cfg.vx0 if cfg.vx0 is not None else route.speed_ref(0.0)[0]
    psi0 = th_ref + cfg.e_psi0
    state = np.array(
        [vx0, cfg.vy0, cfg.r0, x_ref - cfg.e_y0 * math.sin(th_ref), y_ref + cfg.e_y0 * math.cos(th_ref), psi0]
    )
    cols = {c: [] for c in TRACE_COLUMNS}
    deriv = np.empty(6)
    integ = 0.0
    progress = 0.0
    pending = [0.0] * cfg.delay_steps
    t = 0.0
    terminated, cause = False, ""
    k = 0
    while True:
        progress = project(route, state[3], state[4], progress)
        if progress >= route.length - 1e-9:
            break
        if cfg.t_max is not None and t > cfg.t_max + 1e-12:
            break
        vx, vy, r = state[0], state[1], state[2]
        e_y, e_psi, kappa = frenet_errors((state[3], state[4], state[5]), route, progress)
        beta = math.degrees(math.atan2(vy, vx))
        if abs(beta) > cfg.beta_abort_deg:
            terminated, cause = True, f"spin: |beta|={abs(beta):.1f} deg"
            break
        if abs(e_y) > cfg.ey_abort:
            terminated, cause = True, f"off route: |e_y|={abs(e_y):.2f} m"
            break

        x_meas = np.array([e_y, e_psi, vy, r]) + noise * rng.standard_normal(4)
        entry, clamped = bank.lookup(vx)
        preview = route.curvature_preview(progress, vx * cfg.Ts * np.arange(cfg.horizon))
        out = solve_step(mpc.program(entry), x_meas, preview, mpc.budget, cfg.deterministic, clamped)
        pending.append(out.delta_cmd)
        delta = pending.pop(0)

        v_ref, dv_ds = route.speed_ref(progress)
        e_v = v_ref - vx
        integ_next = integ + e_v * cfg.Ts
        a_alf, a_arr = kernels.slips(state, veh, delta)
        Fyf = float(kernels._brush(veh, kernels.TIRE_F, a_alf))
        Fyr = float(kernels._brush(veh, kernels.TIRE_R, a_arr))
        F_cmd = p.m * (v_ref * dv_ds + cfg.kp * e_v + cfg.ki * integ_next)
        F_max = math.sqrt(max(front_limit**2 - Fyf**2, 0.0))
        Fx = min(max(F_cmd, -F_max), F_max)
        if Fx == F_cmd:
            integ = integ_next  # no integration while saturated

        Mz, Fy = _value(cfg.yaw_moment, t), _value(cfg.lateral_force, t)
        kernels._deriv(state, veh, delta, Fx, Mz, Fy, deriv)
        row = (
            t, progress, route.index(progress), vx, vy, r, state[3], state[4], state[5], e_y, e_psi, kappa,
            a_alf, a_arr, Fyf, Fyr, Fx, delta, deriv[0] - r * vy, deriv[1] + r * vx,
            out.status, out.solve_time * 1e3, out.slack_max, out.objective, out.vx_entry, clamped,
        )
        for c, v in zip(TRACE_COLUMNS, row):
            cols[c].append(v)

        status = kernels.integrate(state, veh, delta, Fx, Mz, Fy, cfg.dt_truth, n_sub, MIN_TRUTH_SPEED)
        k += 1
        t = k * cfg.Ts
        if status != kernels.OK:
            terminated, cause = True, "speed dropped below the truth-model floor"
            break

    columns = {c: np.asarray(v) for c, v in cols.items()}
    cfg_dict = asdict(replace(cfg, yaw_moment=_hook_repr(cfg.yaw_moment), lateral_force=_hook_repr(cfg.lateral_force)))
    meta = dict(alpha_peak=list(peaks), route=route.to_list(), truth_C=[truth_tires[0].C, truth_tires[1].C])
    return Trace(columns, terminated, cause, seed, cfg_dict, meta)


def _hook_repr(h):
    return repr(h) if callable(h) else h


# ---------------------------------------------------------------------------
# metrics


def slip_exceedance(trace: Trace, factor: float = 1.1) -> np.ndarray:
    """Per control period: does either slip angle exceed ``factor`` times its peak?"""
    af, ar = trace.meta["alpha_peak"]
    return (np.abs(trace["alpha_f"]) > factor * af) | (np.abs(trace["alpha_r"]) > factor * ar)


def summarize(trace: Trace, factor: float = 1.1) -> dict:
    e_y = trace["e_y"]
    ms = trace["solve_ms"]
    status = trace["mpc_status"]
    n = len(trace)
    return dict(
        steps=n,
        terminated=bool(trace.terminated),
        cause=trace.cause,
        peak_abs_e_y=float(np.max(np.abs(e_y))) if n else float("nan"),
        rms_e_y=float(np.sqrt(np.mean(e_y**2))) if n else float("nan"),
        peak_lateral_accel=float(np.max(np.abs(trace["ay"]))) if n else float("nan"),
        slip_violations=int(np.sum(slip_exceedance(trace, factor))),
        solve_ms_median=float(np.median(ms)) if n else float("nan"),
        solve_ms_p99=float(np.percentile(ms, 99)) if n else float("nan"),
        fallbacks=int(np.sum((status != "optimal") & (status != "inaccurate"))),
        slack_steps=int(np.sum(trace["slack_max"] > 1e-6)),
        clamped_steps=int(np.sum(trace["clamped"])),
    )


def segment_peak_e_y(trace: Trace) -> dict:
    """Peak |e_y| per route segment index."""
    seg = trace["segment"]
    return {int(i): float(np.max(np.abs(trace["e_y"][seg == i]))) for i in np.unique(seg)}


# ---------------------------------------------------------------------------
# Monte-Carlo batch


@dataclass
class BatchResult:
    summaries: list
    exceed_periods: int
    total_periods: int
    seeds: list

    @property
    def exceed_fraction(self) -> float:
        return self.exceed_periods / max(self.total_periods, 1)

    def percentiles(self, key: str, q=(5, 50, 95)) -> dict:
        vals = np.array([s[key] for s in self.summaries], dtype=float)
        return {f"p{int(x)}": float(np.percentile(vals, x)) for x in q}


_WORKER: dict = {}


def _init_worker(p, bank, route, cfg):
    # one bank and one set of compiled step programs per process
    _WORKER.update(p=p, bank=bank, route=route, cfg=cfg)
    _WORKER["mpc"] = TubeMpc(bank, N=cfg.horizon, deterministic=cfg.deterministic)


def _batch_job(args):
    seed, perturb, keep = args
    p, bank, route, cfg = _WORKER["p"], _WORKER["bank"], _WORKER["route"], _WORKER["cfg"]
    rng = np.random.default_rng(seed)
    tires = perturbed_tires(p, *rng.uniform(-1.0, 1.0, 2)) if perturb else None
    tr = simulate(p, bank, route, cfg, seed=int(rng.integers(2**31)), tires=tires, mpc=_WORKER["mpc"])
    s = summarize(tr, cfg.exceed_factor)
    s["seed"] = seed
    s["truth_C"] = tr.meta["truth_C"]
    return s, (tr if keep else None)


def monte_carlo(
    p: VehicleParams,
    bank: ControllerBank,
    route: Route,
    cfg: SimConfig,
    n: int,
    seed: int = 0,
    perturb: bool = True,
    jobs: int = 1,
    keep_traces: bool = False,
):
    """Independent runs with per-run RNG streams spawned from ``seed``.

    Returns ``(BatchResult, traces)``; ``traces`` is empty unless
    ``keep_traces``.
    """
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]
    args = [(s, perturb, keep_traces) for s in seeds]
    init = (p, bank, route, cfg)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=init) as ex:
            results = list(ex.map(_batch_job, args))
    else:
        _init_worker(*init)
        try:
            results = [_batch_job(a) for a in args]
        finally:
            _WORKER.clear()
    summaries = [s for s, _ in results]
    exceed = sum(s["slip_violations"] for s in summaries)
    total = sum(s["steps"] for s in summaries)
    traces = [t for _, t in results] if keep_traces else []
    return BatchResult(summaries, exceed, total, seeds), traces
