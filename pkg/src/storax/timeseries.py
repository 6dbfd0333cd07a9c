"""Hourly input time series: loading, validation and min-max normalization.

Columns are named ``attribute@node``. The attribute kind is inferred from the
attribute name unless given explicitly: names starting with ``demand`` are
demands, names starting with ``cf`` are capacity factors, everything else is a
conversion factor.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from storax.errors import NotDayDivisible, ParseError, ValidationError

HOURS_PER_DAY = 24
KINDS = ("demand", "capacity_factor", "conversion_factor")


def infer_kind(attribute: str) -> str:
    if attribute.startswith("demand"):
        return "demand"
    if attribute.startswith("cf"):
        return "capacity_factor"
    return "conversion_factor"


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AttributeSeries:
    """One hourly series for a single (attribute, node) pair."""

    name: str
    node: str
    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown attribute kind {self.kind!r}")
        if "@" in self.name or "@" in self.node:
            raise ValidationError("attribute and node names must not contain '@'")
        object.__setattr__(self, "values", _frozen(self.values))
        v = self.values
        if v.ndim != 1:
            raise ValidationError(f"{self.column}: values must be one-dimensional")
        if not np.all(np.isfinite(v)):
            bad = int(np.flatnonzero(~np.isfinite(v))[0])
            raise ValidationError(f"{self.column}: non-finite value at hour {bad}")
        if self.kind == "capacity_factor" and v.size and (v.min() < 0.0 or v.max() > 1.0):
            bad = int(np.flatnonzero((v < 0.0) | (v > 1.0))[0])
            raise ValidationError(
                f"{self.column}: capacity factor {v[bad]} outside [0, 1] at hour {bad}"
            )
        if self.kind == "demand" and v.size and v.min() < 0.0:
            bad = int(np.flatnonzero(v < 0.0)[0])
            raise ValidationError(f"{self.column}: negative demand at hour {bad}")

    @property
    def column(self) -> str:
        return f"{self.name}@{self.node}"


@dataclass(frozen=True)
class FullTimeSeries:
    """Fully resolved hourly input, one :class:`AttributeSeries` per column."""

    attributes: tuple[AttributeSeries, ...]
    horizon: int

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        if self.horizon < 1:
            raise ValidationError("horizon must be at least one hour")
        seen = set()
        for a in self.attributes:
            if a.values.size != self.horizon:
                raise ValidationError(
                    f"{a.column}: length {a.values.size} != horizon {self.horizon}"
                )
            if a.column in seen:
                raise ValidationError(f"duplicate column {a.column}")
            seen.add(a.column)

    @classmethod
    def from_columns(
        cls, columns: Mapping[str, Iterable[float]], kinds: Mapping[str, str] | None = None
    ) -> "FullTimeSeries":
        """Build from a ``{"attr@node": values}`` mapping."""
        kinds = dict(kinds or {})
        attrs = []
        for col, values in columns.items():
            name, node = split_column(col)
            attrs.append(AttributeSeries(name, node, kinds.get(name, infer_kind(name)), values))
        if not attrs:
            raise ValidationError("time series needs at least one column")
        return cls(tuple(attrs), attrs[0].values.size)

    @property
    def columns(self) -> list[str]:
        return [a.column for a in self.attributes]

    def __getitem__(self, column: str) -> np.ndarray:
        for a in self.attributes:
            if a.column == column:
                return a.values
        raise KeyError(column)

    def matrix(self) -> np.ndarray:
        """Values as a ``(horizon, n_columns)`` array in column order."""
        return np.column_stack([a.values for a in self.attributes])

    def days(self) -> int:
        if self.horizon % HOURS_PER_DAY:
            raise NotDayDivisible(
                f"horizon {self.horizon} is not a multiple of {HOURS_PER_DAY}"
            )
        return self.horizon // HOURS_PER_DAY


def split_column(column: str) -> tuple[str, str]:
    if column.count("@") != 1:
        raise ParseError(f"column {column!r} is not of the form attribute@node")
    name, node = column.split("@")
    if not name or not node:
        raise ParseError(f"column {column!r} has an empty attribute or node")
    return name, node


def load_timeseries(
    path: str | Path, format: str = "csv", kinds: Mapping[str, str] | None = None
) -> FullTimeSeries:
    """Read a ``hour,attr@node,...`` CSV file.

    Raises
    ------
    ParseError
        Missing header, non-numeric cell, wrong row width or out-of-order hours.
    ValidationError
        Non-finite values, out-of-range capacity factors, negative demand.
    """
    if format != "csv":
        raise ParseError(f"unsupported format {format!r}")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if not header or header[0].strip() != "hour":
            raise ParseError(f"{path}: first header field must be 'hour'")
        cols = [h.strip() for h in header[1:]]
        if not cols:
            raise ParseError(f"{path}: no attribute columns")
        for c in cols:
            split_column(c)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                hour = int(row[0])
                vals = [float(x) for x in row[1:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if hour != len(rows):
                raise ParseError(f"{path}:{lineno}: expected hour {len(rows)}, got {hour}")
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    data = np.array(rows, dtype=float)
    return FullTimeSeries.from_columns({c: data[:, k] for k, c in enumerate(cols)}, kinds)


def write_timeseries(series: FullTimeSeries, path: str | Path) -> None:
    """Write ``series`` as CSV using shortest round-trip float formatting."""
    mat = series.matrix()
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", *series.columns])
        for t in range(series.horizon):
            w.writerow([t, *(repr(float(v)) for v in mat[t])])


@dataclass(frozen=True)
class Normalization:
    """Per-column affine record: ``original = normalized * scale + offset``."""

    scale: dict[str, float] = field(default_factory=dict)
    offset: dict[str, float] = field(default_factory=dict)


def normalize(series: FullTimeSeries) -> tuple[FullTimeSeries, Normalization]:
    """Min-max scale every column to [0, 1].

    Constant columns map to all zeros with unit scale.
    """
    attrs, scale, offset = [], {}, {}
    for a in series.attributes:
        lo, hi = float(a.values.min()), float(a.values.max())
        s = hi - lo
        if s == 0.0 or not math.isfinite(s):
            s = 1.0
        norm = (a.values - lo) / s
        scale[a.column], offset[a.column] = s, lo
        attrs.append(AttributeSeries(a.name, a.node, a.kind, norm))
    return FullTimeSeries(tuple(attrs), series.horizon), Normalization(scale, offset)


def denormalize(series: FullTimeSeries, record: Normalization) -> FullTimeSeries:
    attrs = []
    for a in series.attributes:
        vals = a.values * record.scale[a.column] + record.offset[a.column]
        attrs.append(AttributeSeries(a.name, a.node, a.kind, vals))
    return FullTimeSeries(tuple(attrs), series.horizon)
