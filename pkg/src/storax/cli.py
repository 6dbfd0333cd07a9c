"""``storax`` command line: generate cases, aggregate, solve one cell, run sweeps.

Every flag can also come from a TOML file given with ``--config``; the file
has one table per subcommand (``[gen]``, ``[aggregate]``, ``[solve]``,
``[sweep]``) plus an optional ``[solver]`` table. Command-line flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from storax.errors import ConfigError, StoraxError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

DEFAULTS = {
    "gen": {"seed": 0, "variant": "standard", "nodes": 3, "horizon": 8760, "out": "case"},
    "aggregate": {"case": "case", "mode": "rh", "steps": 96, "out": None},
    "solve": {"case": "case", "method": "Proposed", "level": 96, "out": None, "lp": None, "format": "lp_file"},
    "sweep": {
        "case": None,
        "seed": 0,
        "variant": "standard",
        "levels": None,
        "methods": None,
        "reps": 5,
        "out": "sweep",
        "workers": 1,
        "sequential_timing": False,
    },
}


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _settings(args: argparse.Namespace, config: dict) -> dict:
    section = config.get(args.command, {})
    unknown = set(section) - set(DEFAULTS[args.command])
    if unknown:
        raise ConfigError(f"unknown keys in [{args.command}]: {sorted(unknown)}")
    out = {}
    for key, default in DEFAULTS[args.command].items():
        cli = getattr(args, key, None)
        out[key] = cli if cli is not None else section.get(key, default)
    return out


def _solver(config: dict):
    from storax.solvers import SolverSpec

    try:
        return SolverSpec.from_dict(config.get("solver"))
    except TypeError as exc:
        raise ConfigError(f"bad [solver] table: {exc}") from exc


def _cmd_gen(s: dict, config: dict) -> int:
    from storax.casegen import CaseConfig, write_case

    cfg = CaseConfig(seed=int(s["seed"]), num_nodes=int(s["nodes"]), horizon=int(s["horizon"]), variant=s["variant"])
    out = write_case(cfg, s["out"])
    print(f"wrote case to {out}")
    return 0


def _cmd_aggregate(s: dict, config: dict) -> int:
    from storax.aggregation import aggregate, normalized_rmse
    from storax.casegen import load_case
    from storax.storage_sequence import count_storage_steps

    series, _ = load_case(s["case"])
    agg = aggregate(series, s["mode"], int(s["steps"]))
    out = s["out"] or str(Path(s["case"]) / f"aggregation_{s['mode'].lower()}_{s['steps']}.json")
    agg.save(out)
    summary = {
        "mode": agg.mode,
        "I": agg.n_steps,
        "J": count_storage_steps(agg),
        "normalized_rmse": normalized_rmse(series, agg),
        "out": out,
    }
    print(json.dumps(summary))
    return 0


def _cmd_solve(s: dict, config: dict) -> int:
    from storax.aggregation import aggregate
    from storax.bench import capacity_table
    from storax.casegen import load_case
    from storax.esom import build_model
    from storax.formulations import METHOD_MODE
    from storax.lp import emit_lp
    from storax.reconstruct import audit, reconstruct_hourly, storage_cycles
    from storax.solvers import solve

    series, instance = load_case(s["case"])
    method, level = s["method"], int(s["level"])
    if method not in METHOD_MODE:
        raise ConfigError(f"unknown method {method!r}")
    mode = "Full" if level == series.horizon and method == "FullResolution" else METHOD_MODE[method]
    agg = aggregate(series, mode, level)
    lp = build_model(instance.with_aggregation(agg, method))
    if s["lp"]:
        emit_lp(lp, s["lp"], s["format"])
    sol = solve(lp, _solver(config))
    summary = {"method": method, "level": level, "status": sol.status, "solve_time": sol.solve_time}
    passed = False
    if sol.optimal:
        report = reconstruct_hourly(sol)
        result = audit(report)
        passed = result.passed
        summary.update(
            objective=sol.objective,
            capacities=capacity_table(sol),
            cycles={f"{k[0]}@{k[1]}": v for k, v in storage_cycles(report, report.energy).items()},
            audit_passed=passed,
            diagnostics=result.diagnostics[:10],
        )
        if s["out"]:
            out = Path(s["out"])
            out.mkdir(parents=True, exist_ok=True)
            report.save_json(out / "reconstruction.json")
            report.save_csv(out / "levels.csv")
    else:
        summary["message"] = sol.message
    print(json.dumps(summary, default=str))
    return 0 if passed else 1


def _cmd_sweep(s: dict, config: dict) -> int:
    from storax.bench import DEFAULT_LEVELS, SweepSpec, emit_report, run_sweep
    from storax.casegen import CaseConfig
    from storax.formulations import METHODS

    case = s["case"] if s["case"] else CaseConfig(seed=int(s["seed"]), variant=s["variant"])
    spec = SweepSpec(
        levels=tuple(s["levels"] or DEFAULT_LEVELS),
        methods=tuple(s["methods"] or METHODS),
        repetitions=int(s["reps"]),
        case=case,
        solver=_solver(config),
        workers=int(s["workers"]),
        sequential_timing=bool(s["sequential_timing"]),
    )

    def progress(rec):
        print(f"{rec.method:>15} {rec.level:>5} {rec.status:>10} obj={rec.objective:.6g} "
              f"err={rec.rel_error:+.3e} t={rec.solve_time_mean:.2f}s audit={'ok' if rec.audit_passed else 'FAIL'}",
              flush=True)

    records, reference = run_sweep(spec, progress)
    emit_report(records, s["out"], reference)
    bad = [r for r in records if not r.ok]
    for r in bad:
        print(f"failed cell {r.method} {r.level}: {r.status} {r.message}", file=sys.stderr)
    return 0 if not bad and reference.ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="storax", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="TOML file with per-command settings")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic case")
    g.add_argument("--seed", type=int)
    g.add_argument("--variant", choices=["standard", "no_transport", "no_dispatchable", "electricity_only"])
    g.add_argument("--nodes", type=int)
    g.add_argument("--horizon", type=int)
    g.add_argument("--out")

    a = sub.add_parser("aggregate", help="aggregate a case's time series")
    a.add_argument("--case")
    a.add_argument("--mode", choices=["rd", "rh", "crh", "full"])
    a.add_argument("--steps", type=int)
    a.add_argument("--out")

    s = sub.add_parser("solve", help="solve one method at one level")
    s.add_argument("--case")
    s.add_argument("--method", choices=["Proposed", "Superposition", "MinMax", "FullResolution", "Chrono"])
    s.add_argument("--level", type=int)
    s.add_argument("--out", help="directory for the hourly reconstruction")
    s.add_argument("--lp", help="also write the model to this file")
    s.add_argument("--format", choices=["lp_file", "mps"])

    w = sub.add_parser("sweep", help="benchmark sweep")
    w.add_argument("--case", help="case directory (default: generate from --seed/--variant)")
    w.add_argument("--seed", type=int)
    w.add_argument("--variant", choices=["standard", "no_transport", "no_dispatchable", "electricity_only"])
    w.add_argument("--levels", type=int, nargs="+")
    w.add_argument("--methods", nargs="+")
    w.add_argument("--reps", type=int)
    w.add_argument("--out")
    w.add_argument("--workers", type=int)
    w.add_argument("--sequential-timing", dest="sequential_timing", action="store_true", default=None)
    return p


COMMANDS = {"gen": _cmd_gen, "aggregate": _cmd_aggregate, "solve": _cmd_solve, "sweep": _cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args.config)
        return COMMANDS[args.command](_settings(args, config), config)
    except StoraxError as exc:
        print(f"storax: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
