"""Ex-post hourly storage levels, feasibility audit and cycle counts.

Whatever the storage formulation, the flows of a solved model are known for
every representative step, so the hourly level follows from the plain
self-discharge recursion ``L(t) = (1-phi) L(t-1) + dH(t)``. Levels here are
end-of-hour values; the start value is the level that closes the year.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from storax.errors import NonOptimalInput, ValidationError, ZeroCapacity
from storax.solvers import Solution
from storax.storage_sequence import StorageMap, build_storage_map
from storax.timeseries import HOURS_PER_DAY

AUDIT_RTOL = 1e-6
ABSENT_SHARE = 1e-4


def rollout(initial: float, net_charge: np.ndarray, phi: float) -> np.ndarray:
    """End-of-hour levels of ``L(t) = (1-phi) L(t-1) + net_charge[t]`` from ``L(-1) = initial``."""
    q = 1.0 - phi
    dh = np.asarray(net_charge, dtype=float)
    if dh.size == 0:
        return dh.copy()
    out, _ = lfilter([1.0], [1.0, -q], dh, zi=[q * float(initial)])
    return out


def audit_tolerance(energy: float) -> float:
    return AUDIT_RTOL * max(float(energy), 1.0)


@dataclass
class ReconstructionReport:
    """Hourly levels of every (storage tech, node) of one solution.

    Attributes
    ----------
    method : str
    levels : dict
        ``(tech, node) -> end-of-hour levels``, length T.
    initial : dict
        ``(tech, node) -> level before the first hour``.
    energy : dict
        ``(tech, node) -> installed energy capacity E``.
    withdrawal : dict
        ``(tech, node) -> hourly reservoir-side discharge``, ``discharge / eta_d``.
    steps : StorageMap
        Runs of identical representative steps; flows are constant within each run.
    boundary_residual : dict
        Largest gap between rolled-out and solved levels at the solved points.
    decomposition_residual : dict
        Superposition methods only: gap between the rollout and
        ``L_inter (1-phi)^h + L_intra``.
    """

    method: str
    levels: dict
    initial: dict
    energy: dict
    withdrawal: dict
    steps: StorageMap = field(repr=False)
    boundary_residual: dict = field(default_factory=dict)
    decomposition_residual: dict = field(default_factory=dict)

    def keys(self) -> list:
        return sorted(self.levels)

    def bound_violation(self, key) -> tuple[float, int]:
        """Largest excursion outside ``[0, E]`` in MWh and the 0-based hour where it occurs.

        Hour ``-1`` denotes the start level.
        """
        path = np.concatenate(([self.initial[key]], self.levels[key]))
        excess = np.maximum(np.maximum(-path, path - self.energy[key]), 0.0)
        k = int(np.argmax(excess))
        return float(excess[k]), k - 1

    def max_bound_violation(self) -> float:
        return max((self.bound_violation(k)[0] for k in self.levels), default=0.0)

    def monotonicity_violations(self, key, eps: float | None = None) -> list[int]:
        """1-based storage steps whose hourly levels are not monotone."""
        eps = audit_tolerance(self.energy[key]) if eps is None else eps
        path = np.concatenate(([self.initial[key]], self.levels[key]))
        diffs = np.diff(path)
        bad = []
        for j, (start, d) in enumerate(zip(self.steps.starts(), self.steps.durations)):
            seg = diffs[start : start + d]
            if seg.min() < -eps and seg.max() > eps:
                bad.append(j + 1)
        return bad

    def periodicity_residual(self, key) -> float:
        return abs(float(self.levels[key][-1]) - float(self.initial[key]))

    def to_dict(self) -> dict:
        entries = []
        for key in self.keys():
            viol, hour = self.bound_violation(key)
            entries.append(
                {
                    "tech": key[0],
                    "node": key[1],
                    "energy": self.energy[key],
                    "initial": self.initial[key],
                    "max_bound_violation": viol,
                    "violation_hour": hour,
                    "monotonicity_violations": len(self.monotonicity_violations(key)),
                    "periodicity_residual": self.periodicity_residual(key),
                    "boundary_residual": self.boundary_residual.get(key),
                    "decomposition_residual": self.decomposition_residual.get(key),
                    "levels": self.levels[key].tolist(),
                }
            )
        return {"method": self.method, "storage": entries}

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    def save_csv(self, path: str | Path) -> None:
        """Long format ``hour,tech@node,level`` with 0-based hours."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["hour", "tech@node", "level"])
            for key in self.keys():
                col = f"{key[0]}@{key[1]}"
                for t, v in enumerate(self.levels[key]):
                    w.writerow([t, col, repr(float(v))])


def _superposition_levels(form, own: np.ndarray, agg) -> tuple[float, np.ndarray]:
    """Start level and start-of-hour levels from the inter/intra decomposition."""
    H = HOURS_PER_DAY
    D = agg.day_sequence.size
    P = agg.n_days
    inter = own[:D]
    intra = own[D : D + P * H].reshape(P, H)
    q = 1.0 - form.tech.phi
    combined = inter[:, None] * q ** np.arange(H) + intra[agg.day_sequence - 1]
    return float(inter[0]), combined.ravel()


def reconstruct_hourly(solution: Solution, agg=None, method: str | None = None) -> ReconstructionReport:
    """Roll out hourly levels for every storage tech and node of ``solution``."""
    if not solution.optimal:
        raise NonOptimalInput(f"cannot reconstruct a {solution.status} solution")
    meta = solution.lp.meta
    agg = meta["aggregation"] if agg is None else agg
    method = meta["storage_method"] if method is None else method
    if method != meta["storage_method"]:
        raise ValidationError(f"solution was built with {meta['storage_method']}, not {method}")
    if agg.n_steps != meta["aggregation"].n_steps:
        raise ValidationError("aggregation does not match the solved model")
    seq = agg.sequence - 1
    report = ReconstructionReport(method, {}, {}, {}, {}, build_storage_map(agg.sequence))
    for key, entry in meta["storage"].items():
        form, col_map = entry["form"], entry["col_map"]
        x = solution.x[col_map]
        tech = form.tech
        I = form.n_rep
        own = x[: form.n_vars]
        charge = x[form.col_charge(np.arange(I))]
        discharge = x[form.col_discharge(np.arange(I))]
        net = tech.eta_charge * charge - discharge / tech.eta_discharge
        if method in ("Superposition", "MinMax"):
            start, combined = _superposition_levels(form, own, agg)
        else:
            # the last storage step closes the year
            start = float(own[-1])
        levels = rollout(start, net[seq], tech.phi)
        report.levels[key] = levels
        report.initial[key] = start
        report.energy[key] = float(x[form.col_E()])
        report.withdrawal[key] = (discharge / tech.eta_discharge)[seq]
        if method in ("Superposition", "MinMax"):
            before = np.concatenate(([start], levels[:-1]))
            report.decomposition_residual[key] = float(np.max(np.abs(before - combined)))
            report.boundary_residual[key] = report.decomposition_residual[key]
        else:
            ends = np.cumsum(form.storage_map.durations) - 1
            report.boundary_residual[key] = float(np.max(np.abs(levels[ends] - own)))
    return report


@dataclass(frozen=True)
class AuditResult:
    passed: bool
    diagnostics: list

    def __bool__(self) -> bool:
        return self.passed


def audit(report: ReconstructionReport, energy: dict | None = None) -> AuditResult:
    """Check bounds, monotonicity within storage steps and periodicity.

    The tolerance is ``1e-6 * max(E, 1)`` per tech and node. ``energy``
    overrides the capacities stored in the report.
    """
    diagnostics = []
    for key in report.keys():
        E = report.energy[key] if energy is None else energy[key]
        tol = audit_tolerance(E)
        path = np.concatenate(([report.initial[key]], report.levels[key]))
        for hour in np.flatnonzero((path < -tol) | (path > E + tol)):
            diagnostics.append(
                {"key": key, "check": "bounds", "hour": int(hour) - 1, "level": float(path[hour]), "energy": E}
            )
        for step in report.monotonicity_violations(key, eps=tol):
            diagnostics.append({"key": key, "check": "monotonicity", "step": step})
        resid = report.periodicity_residual(key)
        if resid > tol:
            diagnostics.append({"key": key, "check": "periodicity", "residual": resid})
    return AuditResult(not diagnostics, diagnostics)


def storage_cycles(report: ReconstructionReport, reference: dict | None = None) -> dict:
    """Cycles over the horizon per (tech, node): reservoir-side withdrawal over energy capacity.

    With ``reference`` (``(tech, node) -> capacity``), capacities below 0.01%
    of the reference are reported as ``None`` (absent). Without it, a zero
    capacity raises :class:`ZeroCapacity`.
    """
    out = {}
    for key in report.keys():
        E = report.energy[key]
        if reference is not None:
            if E <= ABSENT_SHARE * reference.get(key, 0.0) or E <= 0.0:
                out[key] = None
                continue
        elif E <= 0.0:
            raise ZeroCapacity(f"{key[0]}@{key[1]} has no energy capacity")
        out[key] = float(report.withdrawal[key].sum() / E)
    return out
