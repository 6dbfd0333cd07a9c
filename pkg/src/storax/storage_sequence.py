"""Chronology of storage-level time steps rebuilt from a representative sequence.

A new storage step starts every time the representative step changes from
one hour to the next. No merging happens across the year boundary, so the
first and last storage steps stay distinct even if they share a
representative step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from storax.aggregation import Aggregation
from storax.errors import EmptySequence, NotChronological, ValidationError


@dataclass(frozen=True)
class StorageMap:
    """Storage-step sequence ``rho`` (hour -> step), ``theta`` (step -> rep step), durations.

    All indices are 1-based.
    """

    rho: np.ndarray
    theta: np.ndarray
    durations: np.ndarray

    def __post_init__(self):
        for name in ("rho", "theta", "durations"):
            arr = np.array(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        rho, theta, d = self.rho, self.theta, self.durations
        if rho.size == 0:
            raise EmptySequence("storage map needs at least one hour")
        steps = np.diff(rho)
        if rho[0] != 1 or np.any((steps != 0) & (steps != 1)):
            raise ValidationError("rho must start at 1 and increase by 0 or 1")
        if theta.size != rho[-1] or d.size != theta.size:
            raise ValidationError("theta and durations must have one entry per storage step")
        if np.any(d < 1) or not np.array_equal(np.bincount(rho)[1:], d):
            raise ValidationError("durations must count the hours of each storage step")

    @property
    def n_steps(self) -> int:
        """Number of storage steps J."""
        return int(self.theta.size)

    @property
    def horizon(self) -> int:
        return int(self.rho.size)

    def expand(self) -> np.ndarray:
        """Representative step of every hour, ``theta[rho[t]]``."""
        return self.theta[self.rho - 1]

    def starts(self) -> np.ndarray:
        """0-based first hour of every storage step."""
        return np.concatenate(([0], np.cumsum(self.durations)[:-1]))

    def to_dict(self) -> dict:
        return {
            "rho": self.rho.tolist(),
            "theta": self.theta.tolist(),
            "durations": self.durations.tolist(),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def from_dict(cls, data: dict) -> "StorageMap":
        return cls(data["rho"], data["theta"], data["durations"])


def build_storage_map(sequence) -> StorageMap:
    """Merge runs of identical consecutive representative steps into storage steps."""
    sigma = np.asarray(sequence, dtype=np.int64).ravel()
    if sigma.size == 0:
        raise EmptySequence("sequence is empty")
    change = sigma[1:] != sigma[:-1]
    rho = np.concatenate(([1], 1 + np.cumsum(change)))
    starts = np.concatenate(([0], np.flatnonzero(change) + 1))
    durations = np.diff(np.append(starts, sigma.size))
    return StorageMap(rho, sigma[starts], durations)


def build_storage_map_chrono(agg: Aggregation) -> StorageMap:
    """Storage map of a chronological aggregation, where storage steps equal rep steps."""
    if np.any(np.diff(agg.sequence) < 0):
        raise NotChronological("sequence decreases; chronological storage needs CRH")
    smap = build_storage_map(agg.sequence)
    if smap.n_steps != agg.n_steps:
        raise NotChronological("chronological sequence must visit every step once")
    return smap


def count_storage_steps(agg: Aggregation) -> int:
    """J = 1 + number of hours whose representative step differs from the previous hour."""
    seq = agg.sequence
    return 1 + int(np.count_nonzero(seq[1:] != seq[:-1]))
