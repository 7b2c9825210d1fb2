"""Command-line front end: ``flexregion {region,fit-errors,validate,inspect}``.

Settings resolve as command-line flag, then ``--config`` JSON file, then the
built-in defaults.  Failures are written to stderr as one JSON object and
the process exits non-zero.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

DATA_DIR = Path(__file__).resolve().parent / "data"
SCHEMA_DIR = Path(__file__).resolve().parent / "schemas"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int = EXIT_FAILURE, **extra):
        super().__init__(message)
        self.kind = kind
        self.code = code
        self.extra = extra

    def payload(self) -> dict:
        return {"error": self.kind, "message": str(self), **self.extra}


@dataclass
class RunConfig:
    feeder: str = str(DATA_DIR / "feeder25.json")
    fleet: str = str(DATA_DIR / "fleet25.json")
    profiles: Optional[str] = None          # defaults to the bundled file for day_type
    errors: str = str(DATA_DIR / "error_table.json")
    k: int = 32
    eps_p: float = 0.5
    eps_v: float = 0.05
    eps_i: float = 0.05
    day_type: str = "sunny"
    times: list = field(default_factory=list)   # empty: every snapshot on the cadence
    cadence: int = 30
    seed: int = 0
    out: str = "out"
    jobs: int = 1
    k_max: int = 5
    samples: int = 10_000
    load_sigma: float = 0.01
    svg: bool = True

    def resolved_profiles(self) -> str:
        return self.profiles or str(DATA_DIR / f"profiles_{self.day_type}.csv")

    def check(self, need=("feeder", "fleet", "profiles", "errors")) -> None:
        if self.k < 3:
            raise CliError("config", f"k must be at least 3, got {self.k}", EXIT_USAGE)
        for name in ("eps_p", "eps_v", "eps_i"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise CliError("config", f"{name} must lie in (0, 1), got {v}", EXIT_USAGE)
        if self.jobs < 1:
            raise CliError("config", "jobs must be positive", EXIT_USAGE)
        if self.cadence < 1:
            raise CliError("config", "cadence must be positive", EXIT_USAGE)
        paths = {"feeder": self.feeder, "fleet": self.fleet,
                 "profiles": self.resolved_profiles(), "errors": self.errors}
        for name in need:
            if not Path(paths[name]).is_file():
                raise CliError("missing-file", f"{name} file not found: {paths[name]}", EXIT_USAGE,
                               path=paths[name])


_FLAG_KEYS = ("feeder", "fleet", "profiles", "errors", "k", "eps_p", "eps_v", "eps_i", "day_type",
              "seed", "out", "jobs", "times", "cadence", "k_max", "samples")


def read_json(path) -> dict:
    """Parse a JSON file; syntax errors report the byte offset of the fault."""
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise CliError("missing-file", f"cannot read {p}: {exc.strerror}", path=str(p)) from exc
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CliError("parse", f"{p} is not UTF-8", path=str(p), offset=exc.start) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise CliError("parse", f"{p}: {exc.msg} at line {exc.lineno} column {exc.colno}",
                       path=str(p), offset=offset, line=exc.lineno, column=exc.colno) from exc


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    if getattr(args, "config", None):
        doc = read_json(args.config)
        if not isinstance(doc, dict):
            raise CliError("config", "config file must hold a JSON object", EXIT_USAGE)
        unknown = sorted(set(doc) - known)
        if unknown:
            raise CliError("config", f"unknown config keys: {', '.join(unknown)}", EXIT_USAGE)
        for key, val in doc.items():
            setattr(cfg, key, val)
    for key in _FLAG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if isinstance(cfg.times, str):
        cfg.times = [t for t in cfg.times.split(",") if t]
    if getattr(args, "no_svg", False):
        cfg.svg = False
    return cfg


# --------------------------------------------------------------------------
# shared loading
# --------------------------------------------------------------------------

def _load_inputs(cfg: RunConfig):
    from .netmodel import network_from_dict, validate_network
    from .scenario import fleet_from_dict, read_profiles
    from .uncertainty import ErrorScenarioTable

    try:
        net = network_from_dict(read_json(cfg.feeder))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CliError):
            raise
        raise CliError("feeder", f"invalid feeder file: {exc}") from exc
    problems = validate_network(net)
    if problems:
        raise CliError("feeder", "invalid feeder: " + "; ".join(problems))
    try:
        fleet = fleet_from_dict(read_json(cfg.fleet), net.base_kva)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CliError):
            raise
        raise CliError("fleet", f"invalid fleet file: {exc!r}") from exc
    try:
        rows = read_profiles(cfg.resolved_profiles())
    except (KeyError, ValueError) as exc:
        raise CliError("profiles", str(exc)) from exc
    table = _load_error_table(cfg)
    return net, fleet, rows, table


def _load_error_table(cfg: RunConfig):
    from .uncertainty import ErrorScenarioTable, fit_error_table, read_error_history

    if cfg.errors.lower().endswith(".csv"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return fit_error_table(read_error_history(cfg.errors), cfg.k_max, seed=cfg.seed)
    try:
        return ErrorScenarioTable.from_dict(read_json(cfg.errors))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CliError):
            raise
        raise CliError("errors", f"invalid error table: {exc!r}") from exc


def _snapshots(cfg: RunConfig, rows: list) -> list:
    from .scenario import subsample

    try:
        by_time = {r["time"]: r for r in subsample(rows, cfg.cadence)}
    except (KeyError, ValueError) as exc:
        raise CliError("profiles", f"bad time column: {exc}") from exc
    if not cfg.times:
        return list(by_time.values())
    missing = [t for t in cfg.times if t not in by_time]
    if missing:
        raise CliError("profiles", f"snapshot times not in profiles: {', '.join(missing)}", EXIT_USAGE)
    return [by_time[t] for t in cfg.times]


def _state_for(cfg: RunConfig, net, grid, fleet, table, row, risk):
    from .drcc import build_state
    from .scenario import snapshot_fleet

    snap = snapshot_fleet(fleet, row, net.base_kva, table, cfg.day_type)
    return build_state(grid, snap, risk, time=row["time"], load_sigma=cfg.load_sigma)


def _dump(doc, path: Path) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _stem(time: str) -> str:
    return time.replace(":", "")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_region(cfg: RunConfig) -> int:
    from .powerflow import GridModel
    from .region import estimate_region, write_svg
    from .uncertainty import RiskConfig

    cfg.check()
    net, fleet, rows, table = _load_inputs(cfg)
    snaps = _snapshots(cfg, rows)
    grid = GridModel(net)
    risk = RiskConfig(cfg.eps_p, cfg.eps_v, cfg.eps_i)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for row in snaps:
        try:
            state = _state_for(cfg, net, grid, fleet, table, row, risk)
        except ValueError as exc:
            raise CliError("fleet", f"snapshot {row['time']}: {exc}") from exc
        poly = estimate_region(state, cfg.k, jobs=cfg.jobs)
        doc = poly.to_dict()
        doc["day_type"] = cfg.day_type
        stem = _stem(poly.time)
        _dump(doc, out / f"region_{stem}.json")
        if cfg.svg:
            write_svg([poly], out / f"region_{stem}.svg")
        ext = poly.extents()
        s = net.base_kva
        summary.append([poly.time, f"{poly.area * s * s:.6f}", *(f"{ext[k] * s:.6f}" for k in
                        ("p_min", "p_max", "q_min", "q_max")), int(poly.degenerate)])
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "area_kw_kvar", "p_min_kw", "p_max_kw", "q_min_kvar", "q_max_kvar",
                    "degenerate"])
        w.writerows(summary)
    print(json.dumps({"snapshots": len(summary), "out": str(out)}))
    return EXIT_OK


def cmd_fit_errors(cfg: RunConfig) -> int:
    from .uncertainty import fit_error_table, read_error_history

    if cfg.k_max < 1:
        raise CliError("config", "k_max must be positive", EXIT_USAGE)
    if not Path(cfg.errors).is_file():
        raise CliError("missing-file", f"errors file not found: {cfg.errors}", EXIT_USAGE, path=cfg.errors)
    try:
        rows = read_error_history(cfg.errors)
    except (KeyError, ValueError) as exc:
        raise CliError("errors", str(exc)) from exc
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            table = fit_error_table(rows, cfg.k_max, seed=cfg.seed)
        except ValueError as exc:
            raise CliError("errors", str(exc)) from exc
    for w in caught:
        print(json.dumps({"warning": str(w.message)}), file=sys.stderr)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump(table.to_dict(), out / "error_table.json")
    with open(out / "aic_bic.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["day_type", "bin", "k", "aic", "bic"])
        for (d, b), (ks, aic, bic) in sorted(table.curves.items()):
            for k, a, c in zip(ks, aic, bic):
                w.writerow([d, b, k, repr(float(a)), repr(float(c))])
    print(json.dumps({"models": len(table.models), "out": str(out)}))
    return EXIT_OK


def cmd_validate(cfg: RunConfig, region_path: str, include_base: bool = False) -> int:
    from .powerflow import GridModel
    from .uncertainty import RiskConfig
    from .validate import monte_carlo_check

    doc = read_json(region_path)
    if not isinstance(doc, dict) or "vertices" not in doc:
        raise CliError("region", f"{region_path} is not a region file", path=region_path)
    decisions = doc.get("decisions")
    if not decisions or len(decisions) != len(doc["vertices"]):
        raise CliError("region", f"{region_path} has no per-vertex decision vectors", path=region_path)
    eps = doc.get("epsilons", {})
    cfg.eps_p = eps.get("eps_p", cfg.eps_p)
    cfg.eps_v = eps.get("eps_v", cfg.eps_v)
    cfg.eps_i = eps.get("eps_i", cfg.eps_i)
    cfg.day_type = doc.get("day_type", cfg.day_type)
    cfg.times = [doc.get("time", "")]
    cfg.check()
    net, fleet, rows, table = _load_inputs(cfg)
    (row,) = _snapshots(cfg, rows)
    grid = GridModel(net)
    state = _state_for(cfg, net, grid, fleet, table, row,
                       RiskConfig(cfg.eps_p, cfg.eps_v, cfg.eps_i))
    d = np.asarray(decisions, dtype=float)
    if d.shape[1] != state.n_var:
        raise CliError("region", f"decision length {d.shape[1]} does not match the fleet ({state.n_var})")
    reports = []
    targets = [("base", np.zeros(state.n_var))] if include_base else []
    targets += [(f"vertex {i}", d[i]) for i in range(d.shape[0])]
    for label, dec in targets:
        if doc.get("degenerate") and label != "base":
            continue
        r = monte_carlo_check(state, dec, n=cfg.samples, seed=cfg.seed).to_dict()
        r["point"] = label
        reports.append(r)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"validate_{_stem(doc.get('time', ''))}.json"
    _dump({"time": doc.get("time", ""), "region": Path(region_path).name, "reports": reports}, path)
    worst = max((max(r["max_voltage_violation"], r["max_current_violation"]) for r in reports), default=0.0)
    print(json.dumps({"reports": len(reports), "worst_network_violation": worst, "out": str(path)}))
    return EXIT_OK


def cmd_inspect(path: str) -> int:
    """Summarize a feeder, fleet, region, report or error-table file."""
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise CliError("inspect", "expected a JSON object", path=path)
    if "buses" in doc and "lines" in doc:
        from .netmodel import network_from_dict, validate_network
        net = network_from_dict(doc)
        info = {"kind": "feeder", "buses": len(net.buses), "lines": len(net.lines),
                "bus_phases": sum(len(b.phases) for b in net.buses),
                "slack": net.slack.id, "base_kva": net.base_kva, "problems": validate_network(net)}
    elif "vertices" in doc:
        info = {"kind": "region", "time": doc.get("time"), "vertices": len(doc["vertices"]),
                "area": doc.get("area"), "degenerate": doc.get("degenerate", False),
                "epsilons": doc.get("epsilons"),
                "binding": sorted({t for b in doc.get("binding", []) for t in b})}
    elif "models" in doc:
        info = {"kind": "error-table",
                "models": [{"day_type": m["day_type"], "bin": m["bin"], "components": len(m["weights"])}
                           for m in doc["models"]]}
    elif "reports" in doc:
        info = {"kind": "validation", "time": doc.get("time"),
                "points": [{"point": r["point"], "voltage": r["max_voltage_violation"],
                            "current": r["max_current_violation"], "pv": r["max_pv_violation"]}
                           for r in doc["reports"]]}
    elif any(k in doc for k in ("pv", "bess", "controllable_loads")):
        info = {"kind": "fleet", **{k: len(doc.get(k, [])) for k in ("controllable_loads", "pv", "bess", "ncl")}}
    else:
        raise CliError("inspect", f"unrecognized file layout: {path}", path=path)
    print(json.dumps(info, indent=1, sort_keys=True))
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of settings (overridden by flags)")
    p.add_argument("--feeder")
    p.add_argument("--fleet")
    p.add_argument("--profiles")
    p.add_argument("--errors", help="error table JSON, or an error-history CSV to fit on the fly")
    p.add_argument("--k", type=int, help="number of search directions (default 32)")
    p.add_argument("--eps-p", dest="eps_p", type=float)
    p.add_argument("--eps-v", dest="eps_v", type=float)
    p.add_argument("--eps-i", dest="eps_i", type=float)
    p.add_argument("--day-type", dest="day_type", choices=("sunny", "cloudy", "overcast"))
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--jobs", type=int)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="flexregion", description="Feeder-head P-Q flexibility regions.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("region", help="estimate polygons for profile snapshots")
    _common(r)
    r.add_argument("--times", help="comma-separated HH:MM snapshots (default: all on the cadence)")
    r.add_argument("--cadence", type=int, help="snapshot cadence in minutes (default 30)")
    r.add_argument("--no-svg", dest="no_svg", action="store_true")

    f = sub.add_parser("fit-errors", help="fit forecast-error mixtures from a history CSV")
    _common(f)
    f.add_argument("--k-max", dest="k_max", type=int)

    v = sub.add_parser("validate", help="Monte-Carlo back-test of a region file")
    _common(v)
    v.add_argument("region", help="region_<time>.json written by 'region'")
    v.add_argument("--samples", type=int, help="Monte-Carlo samples per point (default 10000)")
    v.add_argument("--base", action="store_true", help="also test the unadjusted base point")

    i = sub.add_parser("inspect", help="summarize an input or output file")
    i.add_argument("path")
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "inspect":
            return cmd_inspect(args.path)
        cfg = resolve_config(args)
        if args.command == "fit-errors":
            if args.errors is None and not (args.config and "errors" in read_json(args.config)):
                cfg.errors = str(DATA_DIR / "error_history.csv")
            return cmd_fit_errors(cfg)
        if args.command == "region":
            return cmd_region(cfg)
        return cmd_validate(cfg, args.region, args.base)
    except CliError as exc:
        print(json.dumps(exc.payload(), sort_keys=True), file=sys.stderr)
        return exc.code
    except Exception as exc:  # noqa: BLE001 - last-resort JSON error for scripts
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
