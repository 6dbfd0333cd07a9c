"""Benchmark sweep over aggregation levels and storage methods, plus reporting."""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import stats

from storax.aggregation import (
    Aggregation,
    aggregate_crh,
    aggregate_full,
    aggregate_rd,
    aggregate_rh,
    day_features,
    ward_tree,
)
from storax.casegen import CaseConfig, generate, load_case
from storax.errors import ConfigError, EmptyReference, MissingDuals, StoraxError, ValidationError
from storax.esom import ModelInstance, build_model, capacities, shadow_prices
from storax.formulations import METHOD_MODE, METHODS, predict_sizes
from storax.reconstruct import audit, reconstruct_hourly, storage_cycles
from storax.solvers import Solution, SolverSpec, solve
from storax.storage_sequence import count_storage_steps
from storax.timeseries import HOURS_PER_DAY, FullTimeSeries, normalize

DEFAULT_LEVELS = (24, 48, 96, 192, 384, 768, 1536, 3072, 6144, 8760)
# columns that vary between runs and are masked in golden comparisons
TIMING_COLUMNS = ("solve_time_mean", "solve_time_ci", "build_time")


@dataclass(frozen=True)
class SweepSpec:
    """What to run.

    ``case`` is a :class:`CaseConfig` or a directory written by
    :func:`storax.casegen.write_case`. RD methods at level ``L`` use ``L / 24``
    representative days; levels that are not whole days are flagged as failed
    cells for those methods.
    """

    levels: tuple = DEFAULT_LEVELS
    methods: tuple = METHODS
    repetitions: int = 5
    case: CaseConfig | str | Path = field(default_factory=CaseConfig)
    solver: SolverSpec = field(default_factory=SolverSpec)
    workers: int = 1
    sequential_timing: bool = False

    def __post_init__(self):
        levels = tuple(int(v) for v in self.levels)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "methods", tuple(self.methods))
        if not levels or list(levels) != sorted(set(levels)) or levels[0] < 1:
            raise ConfigError("levels must be positive, unique and sorted ascending")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; expected one of {METHODS}")
        if self.repetitions < 1 or self.workers < 1:
            raise ConfigError("repetitions and workers must be >= 1")

    def load(self) -> tuple[FullTimeSeries, ModelInstance]:
        if isinstance(self.case, CaseConfig):
            return generate(self.case)
        return load_case(self.case)


@dataclass
class BenchRecord:
    """One (method, level) cell. Errors are relative to the full-resolution reference."""

    method: str
    level: int
    mode: str
    n_steps: int = 0
    n_storage_steps: int = 0
    status: str = "error"
    objective: float = math.nan
    rel_error: float = math.nan
    abs_rel_error: float = math.nan
    solve_time_mean: float = math.nan
    solve_time_ci: float = math.nan
    build_time: float = math.nan
    num_vars: int = 0
    num_constraints: int = 0
    storage_vars: int = 0
    storage_constraints: int = 0
    capacities: dict = field(default_factory=dict)
    capacity_error: dict = field(default_factory=dict)
    weighted_capacity_error: float = math.nan
    cycles: dict = field(default_factory=dict)
    audit_passed: bool = False
    max_bound_violation: float = math.nan
    message: str = ""
    price_curve: np.ndarray | None = field(default=None, repr=False)
    energy: dict = field(default_factory=dict, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "optimal" and self.audit_passed

    def flat(self) -> dict:
        """Scalar columns for CSV output; dict fields become ``name:key`` columns."""
        out = {}
        for f in fields(self):
            if f.name in ("price_curve", "energy"):
                continue
            v = getattr(self, f.name)
            if isinstance(v, dict):
                for k in sorted(v):
                    out[f"{f.name}:{k}"] = v[k]
            else:
                out[f.name] = v
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("price_curve")
        d.pop("energy")
        return d


def _ci95(samples: list[float]) -> tuple[float, float]:
    """Mean and half-width of the 95% t-interval (0 for a single sample)."""
    a = np.asarray(samples, dtype=float)
    if a.size < 2:
        return float(a.mean()), 0.0
    half = stats.t.ppf(0.975, a.size - 1) * a.std(ddof=1) / math.sqrt(a.size)
    return float(a.mean()), float(half)


def capacity_table(solution: Solution) -> dict:
    """Capacities summed over nodes, keyed ``kind:tech`` (``cap``, ``energy_cap``, ``power_cap``, ``tcap``)."""
    out: dict = {}
    for key, value in capacities(solution).items():
        name = f"{key[0]}:{key[1]}"
        out[name] = out.get(name, 0.0) + value
    return out


def _generation(caps) -> dict:
    if isinstance(caps, BenchRecord):
        caps = caps.capacities
        return {k: v for k, v in caps.items() if k.startswith("cap:")}
    return dict(caps)


def weighted_capacity_error(record, reference) -> float:
    """Capacity-weighted mean of absolute relative errors over generation technologies.

    ``record`` and ``reference`` are :class:`BenchRecord` objects or plain
    ``tech -> capacity`` mappings. Technologies with zero reference capacity
    are skipped.
    """
    cap, ref = _generation(record), _generation(reference)
    keys = [k for k, v in ref.items() if v > 0]
    if not keys:
        raise EmptyReference("reference has no positive generation capacity")
    total = sum(ref[k] for k in keys)
    return float(sum(abs(cap.get(k, 0.0) - ref[k]) for k in keys) / total)


def price_duration(solution: Solution) -> np.ndarray:
    """Hourly shadow prices averaged over nodes, sorted in descending order."""
    if solution.row_dual is None:
        raise MissingDuals("solution carries no duals")
    agg = solution.lp.meta["aggregation"]
    nodes = solution.lp.meta["nodes"]
    per_step = np.mean([shadow_prices(solution, n) for n in nodes], axis=0)
    return np.sort(per_step[agg.sequence - 1])[::-1]


class _AggregationCache:
    """One aggregation per (mode, level), with Ward trees shared across levels."""

    def __init__(self, series: FullTimeSeries):
        self.series = series
        self.normed = normalize(series)[0].matrix()
        self.trees: dict = {}
        self.cache: dict = {}

    def get(self, mode: str, level: int) -> Aggregation:
        key = (mode, level)
        if key not in self.cache:
            self.cache[key] = self._build(mode, level)
        return self.cache[key]

    def _build(self, mode: str, level: int) -> Aggregation:
        T = self.series.horizon
        if mode == "Full":
            return aggregate_full(self.series)
        if mode == "RH":
            if level < T and "RH" not in self.trees:
                self.trees["RH"] = ward_tree(self.normed)
            return aggregate_rh(self.series, level, self.trees.get("RH"))
        if mode == "RD":
            if level % HOURS_PER_DAY:
                raise ValidationError(f"RD needs a multiple of {HOURS_PER_DAY} steps, got {level}")
            if level < T and "RD" not in self.trees:
                self.trees["RD"] = ward_tree(day_features(self.normed))
            return aggregate_rd(self.series, level // HOURS_PER_DAY, self.trees.get("RD"))
        if mode == "CRH":
            return aggregate_crh(self.series, level)
        raise ValidationError(f"unknown mode {mode!r}")


def _run_cell(instance, agg, method, level, repetitions, solver, reference) -> BenchRecord:
    """Build and solve one cell ``repetitions`` times and evaluate the first solution."""
    rec = BenchRecord(method, level, agg.mode, agg.n_steps, count_storage_steps(agg))
    try:
        t0 = time.perf_counter()
        lp = build_model(instance.with_aggregation(agg, method))
        rec.build_time = time.perf_counter() - t0
        rec.num_vars, rec.num_constraints = lp.n_cols, lp.n_rows
        if instance.storage:
            rec.storage_vars, rec.storage_constraints = predict_sizes(method, agg)
        times = []
        sol = None
        for _ in range(repetitions):
            s = solve(lp, solver)
            times.append(s.solve_time)
            sol = sol or s
        rec.solve_time_mean, rec.solve_time_ci = _ci95(times)
        rec.status = sol.status
        if not sol.optimal:
            rec.message = sol.message
            return rec
        rec.objective = sol.objective
        rec.capacities = capacity_table(sol)
        report = reconstruct_hourly(sol)
        result = audit(report)
        rec.audit_passed = result.passed
        rec.max_bound_violation = report.max_bound_violation()
        if not result.passed:
            rec.message = f"audit failed: {result.diagnostics[:3]}"
        rec.energy = dict(report.energy)
        ref_energy = reference.energy if reference is not None else report.energy
        rec.cycles = {f"{k[0]}@{k[1]}": v for k, v in storage_cycles(report, ref_energy).items()}
        if sol.row_dual is not None:
            rec.price_curve = price_duration(sol)
        if reference is not None:
            _compare(rec, reference)
    except (StoraxError, ValueError, RuntimeError) as exc:
        rec.status = "error"
        rec.message = f"{type(exc).__name__}: {exc}"
    return rec


def _compare(rec: BenchRecord, ref: BenchRecord) -> None:
    rec.rel_error = (rec.objective - ref.objective) / ref.objective
    rec.abs_rel_error = abs(rec.rel_error)
    rec.capacity_error = {
        k: (rec.capacities.get(k, 0.0) - v) / v for k, v in ref.capacities.items() if v > 0
    }
    try:
        rec.weighted_capacity_error = weighted_capacity_error(rec, ref)
    except EmptyReference:
        rec.weighted_capacity_error = math.nan


def _call(args):
    return _run_cell(*args)


def run_sweep(spec: SweepSpec, progress=None) -> tuple[list[BenchRecord], BenchRecord]:
    """Run the reference and every (method, level) cell.

    Returns the cell records ordered by method (as listed in the spec) then
    level, and the reference record (``FullResolution`` without aggregation).
    Failed cells are returned with their status and message instead of raising.
    """
    series, instance = spec.load()
    cache = _AggregationCache(series)
    reference = _run_cell(instance, cache.get("Full", series.horizon), "FullResolution", series.horizon,
                          spec.repetitions, spec.solver, None)
    if reference.status != "optimal":
        raise StoraxError(f"reference solve failed: {reference.status} {reference.message}")
    _compare(reference, reference)
    if progress:
        progress(reference)

    jobs, records = [], {}
    for method in spec.methods:
        mode = METHOD_MODE[method]
        for level in spec.levels:
            try:
                agg = cache.get(mode, level)
            except (StoraxError, ValueError) as exc:
                records[(method, level)] = BenchRecord(method, level, mode, message=f"{type(exc).__name__}: {exc}")
                continue
            jobs.append((instance, agg, method, level, spec.repetitions, spec.solver, reference))

    if spec.workers > 1 and not spec.sequential_timing:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            for rec in pool.map(_call, jobs):
                records[(rec.method, rec.level)] = rec
                if progress:
                    progress(rec)
    else:
        for job in jobs:
            rec = _call(job)
            records[(rec.method, rec.level)] = rec
            if progress:
                progress(rec)
    ordered = [records[(m, lv)] for m in spec.methods for lv in spec.levels]
    return ordered, reference


# --------------------------------------------------------------------------- report


def _csv_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_records_csv(records: list[BenchRecord], path: str | Path) -> None:
    rows = [r.flat() for r in records]
    columns = []
    for row in rows:
        columns.extend(c for c in row if c not in columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_csv_value(row.get(c)) for c in columns])


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(type(v).__name__)


def _legend(ax) -> None:
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=7)


def emit_report(records: list[BenchRecord], outdir: str | Path, reference: BenchRecord | None = None) -> list[Path]:
    """Write ``records.csv``, ``records.json`` and SVG plots; returns the written paths."""
    if not records:
        raise ValidationError("no records to report")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "storax"
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    everything = records + ([reference] if reference is not None else [])
    paths = [out / "records.csv", out / "records.json"]
    write_records_csv(everything, paths[0])
    payload = {
        "records": [r.to_dict() for r in records],
        "reference": reference.to_dict() if reference is not None else None,
    }
    paths[1].write_text(json.dumps(payload, indent=1, default=_json_default, allow_nan=True) + "\n", encoding="utf-8")

    methods = list(dict.fromkeys(r.method for r in records))
    ok = [r for r in records if r.status == "optimal"]

    def save(fig, name):
        path = out / name
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    for m in methods:
        rs = [r for r in ok if r.method == m]
        ax.errorbar([r.solve_time_mean for r in rs], [r.rel_error for r in rs],
                    xerr=[r.solve_time_ci for r in rs], fmt="o-", label=m, capsize=2)
    if ok:
        ax.set_xscale("log")
    ax.set_xlabel("solve time [s]")
    ax.set_ylabel("relative objective error")
    _legend(ax)
    save(fig, "time_vs_error.svg")

    fig, ax = plt.subplots(figsize=(6, 4))
    techs = sorted({k for r in ok for k in r.capacity_error})
    levels = sorted({r.level for r in records})
    width = 0.8 / max(len(methods), 1)
    for k, m in enumerate(methods):
        rs = [r for r in ok if r.method == m and r.capacity_error]
        xs = [levels.index(r.level) + k * width for r in rs]
        ax.bar(xs, [np.mean(np.abs(list(r.capacity_error.values()))) for r in rs], width=width, label=m)
    ax.set_xticks(np.arange(len(levels)) + 0.4 - width / 2, [str(v) for v in levels])
    ax.set_xlabel("representative hours")
    ax.set_ylabel(f"mean |capacity error| over {len(techs)} capacities")
    _legend(ax)
    save(fig, "capacity_error.svg")

    fig, ax = plt.subplots(figsize=(6, 4))
    for m in methods:
        rs = [r for r in records if r.method == m and r.storage_constraints]
        ax.plot([r.level for r in rs], [r.storage_constraints for r in rs], "o-", label=m)
    if any(r.storage_constraints for r in records):
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("representative hours")
    ax.set_ylabel("storage constraints per tech and node")
    _legend(ax)
    save(fig, "counts.svg")

    fig, ax = plt.subplots(figsize=(6, 4))
    for r in everything:
        if r.price_curve is not None and (r is reference or r.level == levels[0]):
            ax.plot(r.price_curve, label=f"{r.method} {r.level}" if r is not reference else "reference")
    ax.set_xlabel("hour (sorted)")
    ax.set_ylabel("shadow price")
    _legend(ax)
    save(fig, "price_duration.svg")
    return paths
