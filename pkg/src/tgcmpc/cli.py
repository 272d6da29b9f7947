"""``tgcmpc`` command line: synth, rci, simulate and export-set.

Exit codes: 0 ok, 1 usage or config error, 2 synthesis failure, 3 simulation
aborted.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import subprocess
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import polytope as pt
from . import rci as rci_mod
from .bank import BANK_VERSION, BankBuildError, ControllerBank, build_bank
from .config import Config, parse_speeds
from .errors import ConfigError, EmptySetError, TgcmpcError
from .polytope import Polytope
from .synthesis import mrci_residuals
from .vehicle import STATE_ORDER

log = logging.getLogger("tgcmpc")

EXIT_OK, EXIT_USAGE, EXIT_SYNTH, EXIT_ABORTED = 0, 1, 2, 3
MANIFEST = "manifest.json"
STATE_NAMES = STATE_ORDER.split(",")


class UsageError(TgcmpcError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# run manifest


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


@dataclass
class RunManifest:
    command: str
    config_paths: list
    bank_version: int
    git_describe: str
    timestamp: str
    output_dir: str
    argv: list = field(default_factory=list)

    def write(self, out: Path) -> Path:
        path = out / MANIFEST
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=1, sort_keys=True)
        return path


def _start(args, command: str) -> Path:
    """Create the output directory and write its manifest before any heavy work."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    RunManifest(
        command=command,
        config_paths=[str(Path(args.config).resolve())] if args.config else [],
        bank_version=BANK_VERSION,
        git_describe=git_describe(),
        timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        output_dir=str(out.resolve()),
        argv=list(args.argv),
    ).write(out)
    return out


def _config(args) -> Config:
    cfg = Config.load(args.config) if args.config else Config()
    if args.speeds is not None:
        cfg.data["mpc"]["speeds"] = parse_speeds(args.speeds, "--speeds")
    return cfg


def _dump_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# ---------------------------------------------------------------------------
# synth


def synth_report(bank: ControllerBank) -> dict:
    rows = []
    for e in bank:
        res = mrci_residuals(e.model, e.mrci)
        rows.append(
            dict(
                vx=e.vx,
                gcc_objective=e.gcc.objective,
                gcc_lmi_residual=e.gcc.lmi_residual,
                gcc_vertex_radius=e.gcc.vertex_radius,
                mrci_objective=e.mrci.objective,
                a_alpha=e.mrci.a_alpha,
                a_sigma=np.ravel(e.mrci.a_sigma).tolist(),
                mrci_residuals=res,
                rci_iterations=e.rci_iterations,
                rci_converged=e.rci_converged,
            )
        )
    return dict(entries=rows, failures={repr(k): v for k, v in bank.failures.items()})


def cmd_synth(args) -> int:
    cfg = _config(args)
    out = _start(args, "synth")
    speeds = cfg.speeds()
    p = cfg.vehicle()
    Ts = float(cfg.data["mpc"]["Ts"])

    def progress(res):
        vx, entry, msg = res
        log.info("%5.1f m/s: %s", vx, "ok" if entry is not None else msg)

    try:
        bank = build_bank(p, speeds, cfg.weights(), Ts, jobs=args.jobs, progress=progress)
    except BankBuildError as exc:
        _dump_json(out / "synth_report.json", dict(entries=[], failures={repr(k): v for k, v in exc.failures.items()}))
        print(f"synthesis failed: {exc}", file=sys.stderr)
        return EXIT_SYNTH
    bank.save(out / "bank.json")
    _dump_json(out / "synth_report.json", synth_report(bank))
    print(f"bank with {len(bank)} entries written to {out / 'bank.json'}")
    for vx, msg in bank.failures.items():
        print(f"warning: {vx} m/s skipped: {msg}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# rci


COMPARISON_COLUMNS = ("speed", "max_abs_r_proposed", "r_max_beal", "max_abs_vy_proposed", "max_abs_vy_beal")


def rci_comparison(p, sets: dict) -> list:
    rows = []
    for vx, res in sorted(sets.items()):
        beal = rci_mod.beal_envelope(p, p.mu, vx)
        rows.append(
            (
                vx,
                rci_mod.max_abs_coordinate(res.set, 1),
                rci_mod.beal_rmax(p, p.mu, vx),
                rci_mod.max_abs_coordinate(res.set, 0),
                rci_mod.max_abs_coordinate(beal, 0),
            )
        )
    return rows


def cmd_rci(args) -> int:
    cfg = _config(args)
    out = _start(args, "rci")
    p = cfg.vehicle()
    sets, failures = rci_mod.build_rci_bank(p, cfg.speeds(), float(cfg.data["mpc"]["Ts"]))
    doc = {
        "state": rci_mod.LABELS,
        "sets": [
            dict(vx=vx, iterations=r.iterations, converged=r.converged, set=r.set.to_dict())
            for vx, r in sorted(sets.items())
        ],
        "failures": {repr(k): v for k, v in failures.items()},
    }
    _dump_json(out / "rci_sets.json", doc)
    with open(out / "rci_comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COMPARISON_COLUMNS)
        for row in rci_comparison(p, sets):
            w.writerow([repr(float(v)) for v in row])
    for vx, r in sorted(sets.items()):
        if not r.converged:
            print(f"warning: RCI at {vx} m/s did not converge in {r.iterations} iterations", file=sys.stderr)
    for vx, msg in failures.items():
        print(f"warning: RCI at {vx} m/s failed: {msg}", file=sys.stderr)
    if not sets:
        return EXIT_SYNTH
    print(f"{len(sets)} RCI sets written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def _load_bank(path) -> ControllerBank:
    try:
        return ControllerBank.load(path)
    except OSError as exc:
        raise ConfigError(f"cannot read bank {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bank {path} is not valid JSON: {exc}") from exc


def cmd_simulate(args) -> int:
    from .simulator import TIMING_COLUMNS, monte_carlo, simulate, summarize

    cfg = _config(args)
    out = _start(args, "simulate")
    p = cfg.vehicle()
    route = cfg.route()
    sim_cfg = cfg.sim_config()
    runs = int(args.runs if args.runs is not None else cfg.data["sim"]["runs"])
    perturb = bool(cfg.data["sim"]["perturb"])
    if runs < 1:
        raise ConfigError("sim.runs must be at least 1")

    if args.bank:
        bank = _load_bank(args.bank)
    else:
        try:
            bank = build_bank(p, cfg.speeds(), cfg.weights(), float(cfg.data["mpc"]["Ts"]), jobs=args.jobs)
        except BankBuildError as exc:
            print(f"synthesis failed: {exc}", file=sys.stderr)
            return EXIT_SYNTH
        bank.save(out / "bank.json")
    lo, hi = bank.speeds.min(), bank.speeds.max()
    if route.speeds.min() < lo or route.speeds.max() > hi:
        log.warning("route speeds %.1f..%.1f exceed the bank range %.1f..%.1f", route.speeds.min(), route.speeds.max(), lo, hi)
    route.save(out / "route.json")

    if runs == 1 and not perturb:
        tr = simulate(p, bank, route, sim_cfg, seed=args.seed)
        tr.write(out / "trace.csv")
        summary = summarize(tr, sim_cfg.exceed_factor)
        summary["seed"] = args.seed
        aborted = [summary] if tr.terminated else []
    else:
        batch, traces = monte_carlo(
            p, bank, route, sim_cfg, runs, seed=args.seed, perturb=perturb, jobs=args.jobs, keep_traces=True
        )
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for i, tr in enumerate(traces):
            tr.write(tdir / f"run_{i:04d}.csv")
        summary = dict(
            runs=runs,
            seed=args.seed,
            perturb=perturb,
            exceed_periods=batch.exceed_periods,
            total_periods=batch.total_periods,
            exceed_fraction=batch.exceed_fraction,
            peak_abs_e_y=batch.percentiles("peak_abs_e_y"),
            rms_e_y=batch.percentiles("rms_e_y"),
            peak_lateral_accel=batch.percentiles("peak_lateral_accel"),
            solve_ms_median=batch.percentiles("solve_ms_median"),
            runs_detail=batch.summaries,
        )
        aborted = [s for s in batch.summaries if s["terminated"]]
        summary["aborted"] = len(aborted)
    summary["timing_columns_omitted_from_csv"] = list(TIMING_COLUMNS)
    _dump_json(out / "summary.json", summary)

    if "slip_violations" in summary:
        print(
            f"peak |e_y| = {summary['peak_abs_e_y']:.4f} m, RMS e_y = {summary['rms_e_y']:.4f} m, "
            f"peak lateral accel = {summary['peak_lateral_accel']:.2f} m/s^2, "
            f"slip violations = {summary['slip_violations']}"
        )
    else:
        print(
            f"{runs} runs: median peak |e_y| = {summary['peak_abs_e_y']['p50']:.4f} m, "
            f"slip exceedance {summary['exceed_periods']}/{summary['total_periods']} periods"
        )
    for s in aborted:
        print(f"aborted (seed {s['seed']}): {s['cause']}", file=sys.stderr)
    return EXIT_ABORTED if aborted else EXIT_OK


# ---------------------------------------------------------------------------
# export-set


def _load_set(path, speed: float | None) -> tuple[Polytope, list]:
    """A polytope from a set file, an ``rci`` output or a controller bank."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read set file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"set file {path} is not valid JSON: {exc}") from exc
    if isinstance(doc, dict) and "H" in doc:
        P = Polytope.from_dict(doc)
        return P, P.labels or [f"x{i}" for i in range(P.dim)]
    if isinstance(doc, dict) and "sets" in doc:
        items = {float(s["vx"]): s["set"] for s in doc["sets"]}
        labels = list(doc.get("state", rci_mod.LABELS))
    elif isinstance(doc, dict) and "entries" in doc:
        items = {float(e["vx"]): e["terminal"] for e in doc["entries"]}
        labels = list(rci_mod.LABELS)
    else:
        raise ConfigError(f"{path}: unrecognized set file")
    if not items:
        raise ConfigError(f"{path}: no sets stored")
    if speed is None:
        if len(items) > 1:
            raise ConfigError(f"{path} holds sets at {sorted(items)} m/s; pick one with --speed")
        speed = next(iter(items))
    if speed not in items:
        raise ConfigError(f"{path}: no set at {speed} m/s (have {sorted(items)})")
    return Polytope.from_dict(items[speed]), labels


def _coord(name: str, labels: list) -> int:
    if name in labels:
        return labels.index(name)
    try:
        i = int(name)
    except ValueError:
        raise ConfigError(f"unknown coordinate {name!r}; expected one of {labels}") from None
    if not 0 <= i < len(labels):
        raise ConfigError(f"coordinate index {i} out of range")
    return i


def slice_polyline(P: Polytope, dims, fixed: dict) -> np.ndarray:
    """Closed boundary polyline of the 2-D slice (first vertex repeated), or an empty array."""
    S = pt.slice_2d(P, dims, fixed)
    if S.is_empty(tol=1e-12):
        return np.zeros((0, 2))
    v = pt.vertices_2d(S)
    if len(v) < 3:
        return np.zeros((0, 2))
    return np.vstack([v, v[:1]])


def cmd_export_set(args) -> int:
    P, labels = _load_set(args.setfile, args.speed)
    names = [s.strip() for s in args.plane.split(",")]
    if len(names) != 2:
        raise ConfigError("--plane needs two coordinates, e.g. v_y,r")
    dims = [_coord(n, labels) for n in names]
    if dims[0] == dims[1]:
        raise ConfigError("--plane coordinates must differ")
    fixed = {}
    for item in filter(None, (s.strip() for s in (args.at or "").split(","))):
        k, _, v = item.partition("=")
        try:
            fixed[_coord(k.strip(), labels)] = float(v)
        except ValueError:
            raise ConfigError(f"bad --at entry {item!r}") from None
    out = _start(args, "export-set")
    poly = slice_polyline(P, dims, fixed)
    path = out / args.name
    if len(poly) == 0:
        path.write_text("")
        print(f"warning: slice is empty, wrote empty {path}", file=sys.stderr)
        return EXIT_OK
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([labels[d] for d in dims])
        for x, y in poly:
            w.writerow([repr(float(x)), repr(float(y))])
    print(f"{len(poly) - 1}-vertex slice written to {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file (defaults are the Table I vehicle)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--speeds", help="speed grid, e.g. 10,15,20 or 7:40:1")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = _Parser(prog="tgcmpc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("synth", parents=[common], help="synthesize a controller bank")
    s.set_defaults(func=cmd_synth)
    s = sub.add_parser("rci", parents=[common], help="maximal RCI sets and the steady-state envelope comparison")
    s.set_defaults(func=cmd_rci)
    s = sub.add_parser("simulate", parents=[common], help="closed-loop simulation (single run or batch)")
    s.add_argument("--bank", help="bank.json from `synth` (synthesized on the fly when omitted)")
    s.add_argument("--runs", type=int, help="number of runs (overrides sim.runs)")
    s.set_defaults(func=cmd_simulate)
    s = sub.add_parser("export-set", parents=[common], help="2-D slice of a stored set as a CSV polyline")
    s.add_argument("setfile")
    s.add_argument("--plane", default="v_y,r", help="two coordinates by name or index")
    s.add_argument("--at", help="values of the other coordinates, e.g. e_y=0,e_psi=0")
    s.add_argument("--speed", type=float, help="pick the set at this speed from a multi-speed file")
    s.add_argument("--name", default="slice.csv", help="output file name inside --out")
    s.set_defaults(func=cmd_export_set)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("usage error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EmptySetError as exc:
        print(f"synthesis failed: {exc}", file=sys.stderr)
        return EXIT_SYNTH


if __name__ == "__main__":
    sys.exit(main())
