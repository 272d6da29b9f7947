"""Speed-scheduled controller bank: per-speed syntheses plus precomputed tightening data."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from . import rci as rci_mod
from .errors import ConfigError, EmptySetError, InfeasibleSynthesisError, InvalidParameterError, TgcmpcError
from .polytope import Polytope
from .synthesis import (
    CostSpec,
    GccSolution,
    MrciSolution,
    build_cost,
    matrix_sqrt,
    rbar_default,
    search_mrci,
    synthesize_gcc,
)
from .vehicle import STATE_ORDER, DiscreteModel, UncertaintyStructure, VehicleParams, build_uncertain_model, discretize

log = logging.getLogger(__name__)

BANK_FORMAT = "tgcmpc-controller-bank"
BANK_VERSION = 1
MAX_FAILURE_FRACTION = 0.10


@dataclass
class Tightening:
    """Constraint rows of the online problem in the four-state coordinates."""

    H_x: np.ndarray  # envelope rows on [e_y, e_psi, v_y, r]
    H_u: np.ndarray
    g: np.ndarray
    H_bar: np.ndarray  # H_x - H_u K
    H_bar_R: np.ndarray  # H_x - H_u K_R
    path_radii: np.ndarray  # ||(H_bar_R)_i E^{-1/2}||
    H_N: np.ndarray  # lifted terminal RCI
    g_N: np.ndarray
    terminal_radii: np.ndarray
    Cy_bar: np.ndarray  # (Cy - Dyu K) in the tube's output scaling
    Dyu: np.ndarray
    Cy_alpha: np.ndarray  # ||(Cy - Dyu K_R)_i E^{-1/2}||
    Rbar: np.ndarray
    gamma_alpha: float  # ||Rbar^{1/2} (K_R - K) E^{-1/2}||


def compute_tightening(
    d: DiscreteModel,
    cost: CostSpec,
    g: GccSolution,
    t: MrciSolution,
    terminal: Polytope,
    H_x2: np.ndarray,
    H_u: np.ndarray,
    g_env: np.ndarray,
) -> Tightening:
    n = d.Ad.shape[0]
    H_x = np.zeros((H_x2.shape[0], n))
    H_x[:, 2:4] = H_x2
    H_u = np.asarray(H_u, dtype=float).reshape(-1, 1)
    Ei = t.E_inv_sqrt
    H_bar = H_x - H_u @ g.K
    H_bar_R = H_x - H_u @ t.K_R
    H_N = terminal.lift(n, [2, 3]).H if terminal.dim == 2 else terminal.H
    Rbar = rbar_default(d, cost, g)
    return Tightening(
        H_x=H_x,
        H_u=H_u.reshape(-1),
        g=np.asarray(g_env, dtype=float),
        H_bar=H_bar,
        H_bar_R=H_bar_R,
        path_radii=np.linalg.norm(H_bar_R @ Ei, axis=1),
        H_N=H_N,
        g_N=terminal.g.copy(),
        terminal_radii=np.linalg.norm(H_N @ Ei, axis=1),
        Cy_bar=t.Cy - t.Dyu @ g.K,
        Dyu=t.Dyu.reshape(-1).copy(),
        Cy_alpha=np.linalg.norm((t.Cy - t.Dyu @ t.K_R) @ Ei, axis=1),
        Rbar=Rbar,
        gamma_alpha=float(np.linalg.norm(matrix_sqrt(Rbar) @ (t.K_R - g.K) @ Ei)),
    )


@dataclass
class BankEntry:
    vx: float
    model: DiscreteModel
    cost: CostSpec
    gcc: GccSolution
    mrci: MrciSolution
    terminal: Polytope  # over (v_y, r)
    rci_iterations: int
    rci_converged: bool
    tight: Tightening
    delta_max: float

    @property
    def Ts(self) -> float:
        return self.model.Ts


@dataclass
class ControllerBank:
    entries: list
    Ts: float
    state_order: str = STATE_ORDER
    failures: dict | None = None

    def __post_init__(self):
        self.entries = sorted(self.entries, key=lambda e: e.vx)
        speeds = [e.vx for e in self.entries]
        if any(b <= a for a, b in zip(speeds, speeds[1:])):
            raise InvalidParameterError("bank speeds must be strictly increasing")
        for e in self.entries:
            if e.model.Ts != self.Ts or e.model.state_order != self.state_order:
                raise InvalidParameterError(f"entry at {e.vx} m/s is inconsistent with the bank")
        self.failures = dict(self.failures or {})

    @property
    def speeds(self) -> np.ndarray:
        return np.array([e.vx for e in self.entries])

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def lookup(self, vx: float) -> tuple[BankEntry, bool]:
        """Nearest entry (ties go to the faster one) and whether ``vx`` was clamped."""
        if not self.entries:
            raise EmptySetError("controller bank is empty")
        sp = self.speeds
        clamped = vx < sp[0] or vx > sp[-1]
        v = min(max(vx, sp[0]), sp[-1])
        dist = np.abs(sp - v)
        best = np.flatnonzero(dist <= dist.min() + 1e-12)
        return self.entries[int(best[-1])], bool(clamped)

    # serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": BANK_FORMAT,
            "version": BANK_VERSION,
            "state_order": self.state_order,
            "Ts": self.Ts,
            "failures": {repr(k): v for k, v in self.failures.items()},
            "entries": [_entry_to_dict(e) for e in self.entries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ControllerBank":
        if d.get("format") != BANK_FORMAT:
            raise ConfigError("not a controller bank file")
        if d.get("version") != BANK_VERSION:
            raise ConfigError(f"unsupported bank version {d.get('version')}")
        entries = [_entry_from_dict(e) for e in d["entries"]]
        failures = {float(k): v for k, v in d.get("failures", {}).items()}
        return cls(entries, float(d["Ts"]), d["state_order"], failures)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "ControllerBank":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _dc_to_dict(obj, skip=()):
    out = {}
    for f in fields(obj):
        if f.name in skip:
            continue
        v = getattr(obj, f.name)
        if isinstance(v, np.ndarray):
            out[f.name] = {"shape": list(v.shape), "data": v.reshape(-1).tolist()}
        elif isinstance(v, UncertaintyStructure):
            out[f.name] = {"n_q": list(v.n_q), "n_p": list(v.n_p)}
        else:
            out[f.name] = v
    return out


def _dc_from_dict(cls, d, **extra):
    kw = {}
    for f in fields(cls):
        if f.name in extra:
            kw[f.name] = extra[f.name]
            continue
        if f.name not in d:
            continue
        v = d[f.name]
        if isinstance(v, dict) and "shape" in v:
            v = np.asarray(v["data"], dtype=float).reshape(v["shape"])
        elif isinstance(v, dict) and "n_q" in v:
            v = UncertaintyStructure(tuple(v["n_q"]), tuple(v["n_p"]))
        kw[f.name] = v
    return cls(**kw)


def _entry_to_dict(e: BankEntry) -> dict:
    return {
        "vx": e.vx,
        "delta_max": e.delta_max,
        "model": _dc_to_dict(e.model),
        "cost": _dc_to_dict(e.cost),
        "gcc": _dc_to_dict(e.gcc, skip=("diagnostics",)),
        "mrci": _dc_to_dict(e.mrci),
        "terminal": e.terminal.to_dict(),
        "rci_iterations": e.rci_iterations,
        "rci_converged": e.rci_converged,
        "tight": _dc_to_dict(e.tight),
    }


def _entry_from_dict(d: dict) -> BankEntry:
    return BankEntry(
        vx=float(d["vx"]),
        model=_dc_from_dict(DiscreteModel, d["model"]),
        cost=_dc_from_dict(CostSpec, d["cost"]),
        gcc=_dc_from_dict(GccSolution, d["gcc"]),
        mrci=_dc_from_dict(MrciSolution, d["mrci"]),
        terminal=Polytope.from_dict(d["terminal"]),
        rci_iterations=int(d["rci_iterations"]),
        rci_converged=bool(d["rci_converged"]),
        tight=_dc_from_dict(Tightening, d["tight"]),
        delta_max=float(d["delta_max"]),
    )


# ---------------------------------------------------------------------------
# assembly


@dataclass(frozen=True)
class CostWeights:
    tau: float = 1.0
    W_imf: float = 0.087
    W_delta: float = 1.0


def synthesize_entry(p: VehicleParams, vx: float, weights: CostWeights, Ts: float, terminal: rci_mod.RciResult | None = None) -> BankEntry:
    mdl = build_uncertain_model(p, vx)
    d = discretize(mdl, Ts)
    cost = build_cost(weights.tau, weights.W_imf, weights.W_delta, mdl.A, mdl.Bu)
    gcc = synthesize_gcc(d, cost)
    tube = search_mrci(d)
    if terminal is None:
        terminal = rci_mod.vehicle_rci(p, vx, Ts)
    spec = rci_mod.EnvelopeSpec.from_vehicle(p, vx)
    H_x2, H_u, g_env = rci_mod.envelope_constraints(spec)
    tight = compute_tightening(d, cost, gcc, tube, terminal.set, H_x2, H_u, g_env)
    return BankEntry(
        vx=float(vx),
        model=d,
        cost=cost,
        gcc=gcc,
        mrci=tube,
        terminal=terminal.set,
        rci_iterations=terminal.iterations,
        rci_converged=terminal.converged,
        tight=tight,
        delta_max=p.delta_max,
    )


def _entry_job(args):
    p, vx, weights, Ts = args
    try:
        return vx, synthesize_entry(p, vx, weights, Ts), None
    except (InfeasibleSynthesisError, EmptySetError) as exc:
        return vx, None, f"{type(exc).__name__}: {exc}"


class BankBuildError(TgcmpcError):
    def __init__(self, message, failures):
        super().__init__(message)
        self.failures = failures


def build_bank(
    p: VehicleParams,
    speeds,
    weights: CostWeights = CostWeights(),
    Ts: float = 0.025,
    jobs: int = 1,
    max_failure_fraction: float = MAX_FAILURE_FRACTION,
    progress=None,
) -> ControllerBank:
    """Synthesize one entry per grid speed.

    Speeds whose synthesis fails are dropped and reported in ``failures``;
    if more than ``max_failure_fraction`` of the grid fails the bank is
    refused with ``BankBuildError``.
    """
    speeds = [float(v) for v in speeds]
    if not speeds:
        raise InvalidParameterError("speed grid is empty")
    jobs_args = [(p, vx, weights, Ts) for vx in speeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_entry_job, jobs_args))
    else:
        results = []
        for a in jobs_args:
            results.append(_entry_job(a))
            if progress:
                progress(results[-1])
    entries = [e for _, e, _ in results if e is not None]
    failures = {vx: msg for vx, _, msg in results if msg is not None}
    for vx, msg in failures.items():
        log.warning("synthesis failed at %s m/s: %s", vx, msg)
    if len(failures) > max_failure_fraction * len(speeds):
        raise BankBuildError(
            f"{len(failures)} of {len(speeds)} grid speeds failed (limit {max_failure_fraction:.0%})", failures
        )
    return ControllerBank(entries, Ts, failures=failures)
