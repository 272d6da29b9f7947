"""JSON run configuration with sections vehicle, tires, cost, mpc, route and sim."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import fields

from .bank import CostWeights
from .errors import ConfigError, TgcmpcError
from .route import Route, straight, two_left_turns
from .simulator import SimConfig
from .vehicle import GRAVITY, TABLE_I, VehicleParams

DEFAULTS = {
    "vehicle": {"m": TABLE_I["m"], "Iz": TABLE_I["Iz"], "a": TABLE_I["a"], "b": TABLE_I["b"], "delta_max": 0.5, "g": GRAVITY},
    "tires": {
        "C_f": TABLE_I["C_f"],
        "C_r": TABLE_I["C_r"],
        "mu": TABLE_I["mu"],
        "R_mu": TABLE_I["R_mu"],
        "use_table_peaks": True,
        "alpha_f_peak_deg": 7.5760,
        "C_f_peak": TABLE_I["C_f_peak"],
        "alpha_r_peak_deg": 4.4711,
        "C_r_peak": TABLE_I["C_r_peak"],
    },
    "cost": {"tau": 1.0, "W_imf": 0.087, "W_delta": 1.0},
    "mpc": {"Ts": 0.025, "horizon": 10, "speeds": {"start": 7.0, "stop": 40.0, "step": 1.0}, "deterministic": True},
    "route": {"kind": "two_left_turns"},
    "sim": {"runs": 1, "perturb": False},
}

SECTIONS = tuple(DEFAULTS)
ROUTE_KINDS = ("two_left_turns", "straight", "segments", "file")


def _merge(base: dict, override: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if k not in base and where not in ("route", "sim"):
            raise ConfigError(f"{where}.{k}: unknown field")
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            out[k] = _merge(base[k], v, f"{where}.{k}")
        else:
            out[k] = v
    return out


def _num(cfg: dict, section: str, key: str, positive: bool = True, allow_zero: bool = False) -> float:
    v = cfg[section][key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{section}.{key}: expected a finite number, got {v!r}")
    if positive and not (v > 0 or (allow_zero and v == 0)):
        raise ConfigError(f"{section}.{key}: must be {'nonnegative' if allow_zero else 'positive'}, got {v!r}")
    return float(v)


class Config:
    def __init__(self, data: dict | None = None):
        data = data or {}
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
        self.data = {s: _merge(DEFAULTS[s], data.get(s, {}) or {}, s) for s in SECTIONS}
        self.validate()

    @classmethod
    def load(cls, path) -> "Config":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls(data)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def validate(self) -> None:
        for k in ("m", "Iz", "a", "b", "delta_max", "g"):
            _num(self.data, "vehicle", k)
        for k in ("C_f", "C_r", "mu", "R_mu"):
            _num(self.data, "tires", k)
        for k in ("tau", "W_delta"):
            _num(self.data, "cost", k)
        _num(self.data, "cost", "W_imf", allow_zero=True)
        _num(self.data, "mpc", "Ts")
        h = self.data["mpc"]["horizon"]
        if isinstance(h, bool) or not isinstance(h, int) or h < 1:
            raise ConfigError(f"mpc.horizon: expected a positive integer, got {h!r}")
        self.speeds()
        kind = self.data["route"].get("kind")
        if kind not in ROUTE_KINDS:
            raise ConfigError(f"route.kind: expected one of {ROUTE_KINDS}, got {kind!r}")
        try:
            self.vehicle()
        except TgcmpcError as exc:
            raise ConfigError(f"vehicle/tires: {exc}") from exc
        try:
            self.sim_config()
        except TypeError as exc:
            raise ConfigError(f"sim: {exc}") from exc
        except TgcmpcError as exc:
            raise ConfigError(f"sim: {exc}") from exc

    # builders --------------------------------------------------------------
    def vehicle(self) -> VehicleParams:
        v, t = self.data["vehicle"], self.data["tires"]
        kw = {}
        if t.get("use_table_peaks", True):
            kw = dict(
                alpha_f_peak=math.radians(t["alpha_f_peak_deg"]),
                C_f_peak=t["C_f_peak"],
                alpha_r_peak=math.radians(t["alpha_r_peak_deg"]),
                C_r_peak=t["C_r_peak"],
            )
        p = VehicleParams.from_axles(
            m=v["m"], Iz=v["Iz"], a=v["a"], b=v["b"], C_f=t["C_f"], C_r=t["C_r"], mu=t["mu"], R_mu=t["R_mu"],
            delta_max=v["delta_max"], g=v["g"], **kw,
        )
        p.tires()  # validates the peak values against the tire curve
        return p

    def weights(self) -> CostWeights:
        c = self.data["cost"]
        return CostWeights(float(c["tau"]), float(c["W_imf"]), float(c["W_delta"]))

    def speeds(self) -> list:
        return parse_speeds(self.data["mpc"]["speeds"], "mpc.speeds")

    def route(self) -> Route:
        r = dict(self.data["route"])
        kind = r.pop("kind")
        mu = self.data["tires"]["mu"]
        try:
            if kind == "two_left_turns":
                return two_left_turns(mu=mu, g=self.data["vehicle"]["g"], **r)
            if kind == "straight":
                return straight(**r)
            if kind == "segments":
                return Route.from_list(r["segments"], mu=mu)
            return Route.load(r["path"], mu=mu)
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"route: {exc}") from exc

    def sim_config(self) -> SimConfig:
        s = {k: v for k, v in self.data["sim"].items() if k not in ("runs", "perturb")}
        names = {f.name for f in fields(SimConfig)}
        bad = set(s) - names
        if bad:
            raise ConfigError(f"sim.{sorted(bad)[0]}: unknown field")
        s.setdefault("Ts", self.data["mpc"]["Ts"])
        s.setdefault("horizon", self.data["mpc"]["horizon"])
        s.setdefault("deterministic", self.data["mpc"]["deterministic"])
        if "noise_std" in s:
            s["noise_std"] = tuple(s["noise_std"])
        return SimConfig(**s)


def parse_speeds(spec, where: str = "speeds") -> list:
    """Speeds from a list, ``{"start","stop","step"}`` or a string ``"10,15,20"`` / ``"7:40:1"``."""
    if isinstance(spec, str):
        spec = spec.strip()
        if not spec:
            raise ConfigError(f"{where}: empty speed list")
        if ":" in spec:
            try:
                a, b, *c = (float(x) for x in spec.split(":"))
            except ValueError as exc:
                raise ConfigError(f"{where}: bad range {spec!r}") from exc
            spec = {"start": a, "stop": b, "step": c[0] if c else 1.0}
        else:
            try:
                spec = [float(x) for x in spec.split(",") if x.strip()]
            except ValueError as exc:
                raise ConfigError(f"{where}: bad speed list {spec!r}") from exc
    if isinstance(spec, dict):
        try:
            a, b, h = float(spec["start"]), float(spec["stop"]), float(spec.get("step", 1.0))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: needs numeric start/stop/step") from exc
        if not h > 0 or b < a:
            raise ConfigError(f"{where}: need step > 0 and stop >= start")
        n = int(math.floor((b - a) / h + 1e-9)) + 1
        spec = [round(a + i * h, 12) for i in range(n)]
    if not isinstance(spec, (list, tuple)) or not spec:
        raise ConfigError(f"{where}: empty speed list")
    try:
        out = sorted(float(v) for v in spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: speeds must be numbers") from exc
    if any(not (v > 0 and math.isfinite(v)) for v in out):
        raise ConfigError(f"{where}: speeds must be positive")
    if len(set(out)) != len(out):
        raise ConfigError(f"{where}: duplicate speeds")
    return out


def default_config() -> Config:
    return Config({})

