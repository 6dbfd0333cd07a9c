"""Time series aggregation into representative days, hours, or chronological hours.

All modes cluster on min-max normalized columns with equal weights and
represent every cluster by the mean of its members. Representative steps are
numbered 1..I in order of first occurrence in the year, so results do not depend
on library-internal cluster labels.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.cluster.hierarchy import linkage

from storax.errors import InvalidCount, NotDayDivisible, ValidationError
from storax.timeseries import HOURS_PER_DAY, FullTimeSeries, normalize

MODES = ("RD", "RH", "CRH", "Full")


def _readonly(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Aggregation:
    """Result of any aggregation method.

    Attributes
    ----------
    mode : str
        One of ``RD``, ``RH``, ``CRH``, ``Full``.
    sequence : np.ndarray
        1-based representative step of every original hour (length T).
    weights : np.ndarray
        Occurrence count of each representative step (length I).
    rep_values : dict
        Representative value per column, arrays of length I.
    day_sequence : np.ndarray or None
        1-based representative day of every original day (RD only).
    """

    mode: str
    sequence: np.ndarray
    weights: np.ndarray
    rep_values: dict
    day_sequence: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"unknown aggregation mode {self.mode!r}")
        seq = _readonly(self.sequence, np.int64)
        w = _readonly(self.weights, np.int64)
        object.__setattr__(self, "sequence", seq)
        object.__setattr__(self, "weights", w)
        object.__setattr__(
            self, "rep_values", {k: _readonly(v, float) for k, v in self.rep_values.items()}
        )
        n = w.size
        if seq.size == 0 or n == 0:
            raise ValidationError("empty aggregation")
        if seq.min() < 1 or seq.max() > n:
            raise ValidationError("sequence values must lie in [1, I]")
        if np.any(w < 1):
            raise ValidationError("every representative step must occur at least once")
        if not np.array_equal(np.bincount(seq, minlength=n + 1)[1:], w):
            raise ValidationError("weights must equal occurrence counts of the sequence")
        for col, v in self.rep_values.items():
            if v.size != n:
                raise ValidationError(f"{col}: {v.size} representative values, expected {n}")
        if self.mode == "RD":
            if self.day_sequence is None:
                raise ValidationError("RD aggregation needs a day sequence")
            psi = _readonly(self.day_sequence, np.int64)
            object.__setattr__(self, "day_sequence", psi)
            if n % HOURS_PER_DAY or psi.size * HOURS_PER_DAY != seq.size:
                raise ValidationError("RD aggregation must consist of whole days")
            expected = (HOURS_PER_DAY * (psi[:, None] - 1) + np.arange(1, HOURS_PER_DAY + 1)).ravel()
            if not np.array_equal(expected, seq):
                raise ValidationError("RD sequence must expand the day sequence hour by hour")
        elif self.day_sequence is not None:
            raise ValidationError("day sequence is only defined for RD aggregations")
        if self.mode == "CRH" and np.any(np.diff(seq) < 0):
            raise ValidationError("CRH sequence must be non-decreasing")
        if self.mode == "Full" and not np.array_equal(seq, np.arange(1, seq.size + 1)):
            raise ValidationError("Full aggregation must use the identity sequence")

    @property
    def horizon(self) -> int:
        return int(self.sequence.size)

    @property
    def n_steps(self) -> int:
        return int(self.weights.size)

    @property
    def n_days(self) -> int | None:
        """Number of representative days P (RD only)."""
        if self.mode != "RD":
            return None
        return self.n_steps // HOURS_PER_DAY

    def expand(self, column: str) -> np.ndarray:
        """Hourly series obtained by looking up every hour's representative value."""
        return self.rep_values[column][self.sequence - 1]

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "I": self.n_steps,
            "sequence": self.sequence.tolist(),
            "weights": self.weights.tolist(),
            "rep_values": {k: v.tolist() for k, v in self.rep_values.items()},
        }
        if self.day_sequence is not None:
            out["P"] = self.n_days
            out["day_sequence"] = self.day_sequence.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Aggregation":
        agg = cls(
            data["mode"],
            data["sequence"],
            data["weights"],
            data["rep_values"],
            data.get("day_sequence"),
        )
        if agg.n_steps != data["I"]:
            raise ValidationError("declared I does not match weights")
        return agg

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Aggregation":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _first_occurrence_labels(labels: np.ndarray) -> np.ndarray:
    """Relabel arbitrary cluster ids to 1..k in order of first appearance."""
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(1, first.size + 1)
    return rank[inverse.ravel()]


def _cluster_means(values: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Mean of ``values`` rows per 1-based label; returns shape (k, ncols)."""
    counts = np.bincount(labels, minlength=k + 1)[1:]
    sums = np.zeros((k, values.shape[1]))
    np.add.at(sums, labels - 1, values)
    return sums / counts[:, None]


def ward_tree(features: np.ndarray) -> np.ndarray:
    """Ward linkage matrix of the rows of ``features``."""
    if features.shape[0] < 2:
        return np.empty((0, 4))
    return linkage(features, method="ward")


def cut_tree_labels(tree: np.ndarray, n: int, k: int) -> np.ndarray:
    """Flat labels with exactly ``k`` clusters from the first ``n - k`` merges.

    Parameters
    ----------
    tree : np.ndarray
        Linkage matrix as returned by :func:`ward_tree`.
    n : int
        Number of observations.
    k : int
        Number of clusters, ``1 <= k <= n``.
    """
    parent = np.arange(2 * n - 1)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for m in range(n - k):
        a, b = int(tree[m, 0]), int(tree[m, 1])
        parent[find(a)] = n + m
        parent[find(b)] = n + m
    roots = np.array([find(x) for x in range(n)])
    return _first_occurrence_labels(roots)


def _column_values(series: FullTimeSeries) -> tuple[list[str], np.ndarray, np.ndarray]:
    normed, _ = normalize(series)
    return series.columns, series.matrix(), normed.matrix()


def _check_count(count: int, upper: int, what: str) -> None:
    if not isinstance(count, (int, np.integer)) or count < 1 or count > upper:
        raise InvalidCount(f"{what} must be an integer in [1, {upper}], got {count!r}")


def aggregate_full(series: FullTimeSeries) -> Aggregation:
    """Identity aggregation (no reduction)."""
    T = series.horizon
    return Aggregation(
        "Full",
        np.arange(1, T + 1),
        np.ones(T, dtype=np.int64),
        {a.column: a.values for a in series.attributes},
    )


def aggregate_rh(
    series: FullTimeSeries, n_steps: int, tree: np.ndarray | None = None
) -> Aggregation:
    """Representative hours by Ward clustering of the hourly feature vectors.

    ``tree`` may carry a precomputed :func:`ward_tree` of the normalized hourly
    matrix so several levels can be cut from one linkage.
    """
    T = series.horizon
    _check_count(n_steps, T, "number of representative hours")
    cols, raw, normed = _column_values(series)
    if n_steps == T:
        labels = np.arange(1, T + 1)
    else:
        if tree is None:
            tree = ward_tree(normed)
        labels = cut_tree_labels(tree, T, n_steps)
    means = _cluster_means(raw, labels, n_steps)
    weights = np.bincount(labels, minlength=n_steps + 1)[1:]
    return Aggregation("RH", labels, weights, {c: means[:, k] for k, c in enumerate(cols)})


def day_features(normed: np.ndarray) -> np.ndarray:
    """Reshape an hourly ``(T, A)`` matrix to ``(D, 24 * A)`` day vectors."""
    D = normed.shape[0] // HOURS_PER_DAY
    return normed.reshape(D, HOURS_PER_DAY * normed.shape[1])


def aggregate_rd(
    series: FullTimeSeries, n_days: int, tree: np.ndarray | None = None
) -> Aggregation:
    """Representative days by Ward clustering of whole-day vectors."""
    T = series.horizon
    if T % HOURS_PER_DAY:
        raise NotDayDivisible(f"horizon {T} is not a multiple of {HOURS_PER_DAY}")
    D = T // HOURS_PER_DAY
    _check_count(n_days, D, "number of representative days")
    cols, raw, normed = _column_values(series)
    if n_days == D:
        psi = np.arange(1, D + 1)
    else:
        if tree is None:
            tree = ward_tree(day_features(normed))
        psi = cut_tree_labels(tree, D, n_days)
    rep_days = _cluster_means(day_features(raw), psi, n_days)  # (P, 24*A)
    A = raw.shape[1]
    rep = rep_days.reshape(n_days, HOURS_PER_DAY, A)
    sequence = (HOURS_PER_DAY * (psi[:, None] - 1) + np.arange(1, HOURS_PER_DAY + 1)).ravel()
    day_counts = np.bincount(psi, minlength=n_days + 1)[1:]
    weights = np.repeat(day_counts, HOURS_PER_DAY)
    rep_values = {c: rep[:, :, k].ravel() for k, c in enumerate(cols)}
    return Aggregation("RD", sequence, weights, rep_values, day_sequence=psi)


def crh_segments(features: np.ndarray, n_segments: int) -> np.ndarray:
    """Adjacency-constrained Ward merging of consecutive rows.

    Repeatedly merges the neighbouring pair of segments whose union increases
    the total within-segment squared error the least; ties go to the pair with
    the lowest start index. Returns the 1-based, non-decreasing segment label of
    each row.
    """
    n = features.shape[0]
    size = np.ones(n)
    sums = features.astype(float).copy()
    nxt = list(range(1, n)) + [-1]
    prv = [-1] + list(range(n - 1))
    alive = [True] * n
    version = [0] * n

    def cost(a, b):
        na, nb = size[a], size[b]
        diff = sums[a] / na - sums[b] / nb
        return na * nb / (na + nb) * float(diff @ diff)

    heap = [(cost(a, a + 1), a, 0, 0) for a in range(n - 1)]
    heapq.heapify(heap)
    remaining = n
    while remaining > n_segments:
        c, a, va, vb = heapq.heappop(heap)
        b = nxt[a]
        if not alive[a] or b < 0 or version[a] != va or version[b] != vb:
            continue
        size[a] += size[b]
        sums[a] += sums[b]
        alive[b] = False
        nxt[a] = nxt[b]
        if nxt[b] >= 0:
            prv[nxt[b]] = a
        version[a] += 1
        remaining -= 1
        if prv[a] >= 0:
            p = prv[a]
            heapq.heappush(heap, (cost(p, a), p, version[p], version[a]))
        if nxt[a] >= 0:
            q = nxt[a]
            heapq.heappush(heap, (cost(a, q), a, version[a], version[q]))
    starts = np.zeros(n, dtype=np.int64)
    starts[[k for k in range(n) if alive[k]]] = 1
    return np.cumsum(starts)


def aggregate_crh(series: FullTimeSeries, n_steps: int) -> Aggregation:
    """Chronological representative hours: contiguous segments of the year."""
    T = series.horizon
    _check_count(n_steps, T, "number of representative hours")
    cols, raw, normed = _column_values(series)
    labels = crh_segments(normed, n_steps)
    means = _cluster_means(raw, labels, n_steps)
    weights = np.bincount(labels, minlength=n_steps + 1)[1:]
    return Aggregation("CRH", labels, weights, {c: means[:, k] for k, c in enumerate(cols)})


def aggregate(series: FullTimeSeries, mode: str, n_steps: int) -> Aggregation:
    """Dispatch by mode; for RD ``n_steps`` must be a multiple of 24."""
    mode = mode.upper() if mode.lower() != "full" else "Full"
    if mode == "RH":
        return aggregate_rh(series, n_steps)
    if mode == "CRH":
        return aggregate_crh(series, n_steps)
    if mode == "RD":
        if n_steps % HOURS_PER_DAY:
            raise InvalidCount(f"RD needs a multiple of {HOURS_PER_DAY} steps, got {n_steps}")
        return aggregate_rd(series, n_steps // HOURS_PER_DAY)
    if mode == "Full":
        return aggregate_full(series)
    raise ValidationError(f"unknown aggregation mode {mode!r}")


def aggregation_error(series: FullTimeSeries, agg: Aggregation) -> dict[str, float]:
    """Root-mean-square error between every input column and its reconstruction."""
    if agg.horizon != series.horizon:
        raise ValidationError("aggregation horizon does not match the series")
    return {
        a.column: float(np.sqrt(np.mean((a.values - agg.expand(a.column)) ** 2)))
        for a in series.attributes
    }


def normalized_rmse(series: FullTimeSeries, agg: Aggregation) -> float:
    """RMSE over all columns on the min-max normalized scale.

    This is the quantity the Ward criterion minimizes (up to a constant), so it
    is the natural yardstick for comparing aggregation modes.
    """
    _, rec = normalize(series)
    err = aggregation_error(series, agg)
    sq = [(err[c] / rec.scale[c]) ** 2 for c in series.columns]
    return float(np.sqrt(np.mean(sq)))
