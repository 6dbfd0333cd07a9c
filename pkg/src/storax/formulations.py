"""Storage-level variables and constraints for the five benchmarked methods.

Each builder returns a :class:`StorageFormulation` for one storage technology at
one node. Constraints are stored as a sparse block over a *local* column space:

* the formulation's own level variables, in declaration order, then
* the energy capacity ``E``,
* the charge flows ``charge[i]`` for every representative step ``i``,
* the discharge flows ``discharge[i]``.

The model assembler maps local columns to global LP columns. Net charging is
never a variable; it is expanded inline as ``eta_c * charge - discharge / eta_d``.

Counting follows the convention that two-sided level bounds are two rows and
that the fixed start-of-day intra level is a variable bound, not a row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from storax.aggregation import Aggregation
from storax.errors import DomainError, NotChronological, ValidationError, WrongMode
from storax.storage_sequence import (
    StorageMap,
    build_storage_map,
    build_storage_map_chrono,
    count_storage_steps,
)
from storax.timeseries import HOURS_PER_DAY

METHODS = ("Proposed", "Superposition", "MinMax", "FullResolution", "Chrono")

# which aggregation mode each method is benchmarked with
METHOD_MODE = {
    "Proposed": "RH",
    "FullResolution": "RH",
    "Superposition": "RD",
    "MinMax": "RD",
    "Chrono": "CRH",
}

_DIRECT_SUM_LIMIT = 64


@dataclass(frozen=True)
class StorageTech:
    name: str
    phi: float
    eta_charge: float = 1.0
    eta_discharge: float = 1.0
    cost_energy: float = 0.0
    cost_power: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.phi < 1.0:
            raise DomainError(f"{self.name}: self-discharge must lie in [0, 1)")
        for eta in (self.eta_charge, self.eta_discharge):
            if not 0.0 < eta <= 1.0:
                raise DomainError(f"{self.name}: efficiencies must lie in (0, 1]")
        if self.cost_energy < 0 or self.cost_power < 0:
            raise DomainError(f"{self.name}: costs must be non-negative")


@dataclass(frozen=True)
class GeomFactor:
    """Coefficients of a storage step lasting ``d`` hours with constant net charging.

    ``level_end = decay * level_start + accum * net_charge``
    """

    decay: float
    accum: float


def geom_factor(phi: float, d: int) -> GeomFactor:
    """Decay ``(1-phi)^d`` and accumulation ``sum_{k<d} (1-phi)^k``.

    Short spans are summed directly; longer spans use the closed form written
    with ``log1p``/``expm1`` so small ``phi`` keeps full relative precision.
    """
    if not 0.0 <= phi < 1.0:
        raise DomainError(f"self-discharge rate must lie in [0, 1), got {phi}")
    if int(d) != d or d < 1:
        raise DomainError(f"duration must be a positive integer, got {d}")
    d = int(d)
    if phi == 0.0:
        return GeomFactor(1.0, float(d))
    q = 1.0 - phi
    if d <= _DIRECT_SUM_LIMIT:
        accum, term = 0.0, 1.0
        for _ in range(d):
            accum += term
            term *= q
        return GeomFactor(q**d, accum)
    log_q = math.log1p(-phi)
    decay = math.exp(d * log_q)
    if decay == 0.0:
        return GeomFactor(0.0, 1.0 / phi)
    return GeomFactor(decay, -math.expm1(d * log_q) / phi)


@dataclass
class StorageFormulation:
    """Abstract linear storage block for one technology at one node.

    Attributes
    ----------
    method : str
    tech : StorageTech
    n_rep : int
        Number of representative steps I (size of the charge/discharge blocks).
    var_blocks : list of (name, labels, lb, ub)
        Own variables in local column order.
    row_labels : list of tuple
        ``(block name, index...)`` per row.
    lo, hi : np.ndarray
        Row bounds, ``lo <= A x <= hi``.
    matrix : scipy.sparse.csr_matrix
        Coefficients over the local column space.
    predicted : tuple of int
        Closed-form ``(num_vars, num_constraints)``.
    limit_rows : int
        Number of rows that bound the storage level against ``0`` and ``E``.
    storage_map : StorageMap or None
        Storage steps of the level chain (chain methods only).
    """

    method: str
    tech: StorageTech
    n_rep: int
    var_blocks: list = field(default_factory=list)
    row_labels: list = field(default_factory=list)
    lo: np.ndarray = None
    hi: np.ndarray = None
    matrix: sp.csr_matrix = None
    predicted: tuple = (0, 0)
    limit_rows: int = 0
    storage_map: StorageMap | None = None

    @property
    def n_vars(self) -> int:
        return sum(len(b[1]) for b in self.var_blocks)

    @property
    def n_constraints(self) -> int:
        return len(self.row_labels)

    @property
    def size(self) -> tuple[int, int]:
        return self.n_vars, self.n_constraints

    @property
    def n_local(self) -> int:
        return self.n_vars + 1 + 2 * self.n_rep

    def col_E(self) -> int:
        return self.n_vars

    def col_charge(self, i):
        return self.n_vars + 1 + np.asarray(i)

    def col_discharge(self, i):
        return self.n_vars + 1 + self.n_rep + np.asarray(i)

    def block_offset(self, name: str) -> int:
        off = 0
        for bname, labels, _, _ in self.var_blocks:
            if bname == name:
                return off
            off += len(labels)
        raise KeyError(name)

    def local_names(self) -> list[str]:
        names = []
        for bname, labels, _, _ in self.var_blocks:
            names.extend(f"{bname}[{','.join(map(str, lab))}]" for lab in labels)
        names.append("E")
        names.extend(f"charge[{i + 1}]" for i in range(self.n_rep))
        names.extend(f"discharge[{i + 1}]" for i in range(self.n_rep))
        return names

    def check(self) -> None:
        """Validate the structural invariants of the block."""
        m = self.matrix
        if m.shape != (self.n_constraints, self.n_local):
            raise ValidationError("matrix shape does not match declared rows/columns")
        if np.any(np.diff(m.indptr) == 0):
            raise ValidationError("empty constraint row")
        if self.size != tuple(self.predicted):
            raise ValidationError(f"emitted size {self.size} != predicted {self.predicted}")

    def dump(self) -> str:
        """Human-readable ``lhs relop rhs`` lines with terms sorted by variable name."""
        names = self.local_names()
        m = self.matrix.tocsr()
        lines = []
        for r, label in enumerate(self.row_labels):
            cols = m.indices[m.indptr[r] : m.indptr[r + 1]]
            vals = m.data[m.indptr[r] : m.indptr[r + 1]]
            terms = sorted(zip((names[c] for c in cols), vals))
            lhs = " ".join(f"{v:+.12g} {n}" for n, v in terms)
            lo, hi = self.lo[r], self.hi[r]
            if lo == hi:
                rel = f"= {lo:.12g}"
            elif np.isinf(hi):
                rel = f">= {lo:.12g}"
            elif np.isinf(lo):
                rel = f"<= {hi:.12g}"
            else:
                rel = f"in [{lo:.12g}, {hi:.12g}]"
            tag = label[0] + "(" + ",".join(map(str, label[1:])) + ")"
            lines.append(f"{tag}: {lhs} {rel}")
        return "\n".join(lines) + "\n"


class _Rows:
    """Accumulates COO triplets and row bounds."""

    def __init__(self):
        self.r, self.c, self.v = [], [], []
        self.lo, self.hi, self.labels = [], [], []
        self.n = 0

    def add(self, labels, cols, vals, lo, hi):
        """Add ``len(labels)`` rows; ``cols``/``vals`` are lists of per-term arrays."""
        k = len(labels)
        rows = np.arange(self.n, self.n + k)
        for cc, vv in zip(cols, vals):
            self.r.append(rows)
            self.c.append(np.broadcast_to(np.asarray(cc, dtype=np.int64), (k,)))
            self.v.append(np.broadcast_to(np.asarray(vv, dtype=float), (k,)))
        self.lo.append(np.broadcast_to(np.asarray(lo, dtype=float), (k,)))
        self.hi.append(np.broadcast_to(np.asarray(hi, dtype=float), (k,)))
        self.labels.extend(labels)
        self.n += k

    def finish(self, form: StorageFormulation) -> StorageFormulation:
        r = np.concatenate(self.r)
        c = np.concatenate(self.c)
        v = np.concatenate(self.v)
        m = sp.coo_matrix((v, (r, c)), shape=(self.n, form.n_local)).tocsr()
        m.sum_duplicates()
        m.eliminate_zeros()
        form.matrix = m
        form.lo = np.concatenate(self.lo).copy()
        form.hi = np.concatenate(self.hi).copy()
        form.row_labels = self.labels
        form.check()
        return form


def _net_charge_terms(form: StorageFormulation, i, scale):
    """Columns and coefficients of ``scale * (eta_c*charge[i] - discharge[i]/eta_d)``."""
    t = form.tech
    return (
        [form.col_charge(i), form.col_discharge(i)],
        [np.asarray(scale) * t.eta_charge, -np.asarray(scale) / t.eta_discharge],
    )


def _chain(smap: StorageMap, tech: StorageTech, method: str, n_rep: int) -> StorageFormulation:
    """Level chain over storage steps with periodic wrap and 0 <= L <= E bounds."""
    J = smap.n_steps
    form = StorageFormulation(method, tech, n_rep, storage_map=smap)
    form.var_blocks = [
        ("L", [(j,) for j in range(1, J + 1)], np.full(J, -np.inf), np.full(J, np.inf))
    ]
    form.predicted = (J, 3 * J)
    form.limit_rows = 2 * J
    factors = [geom_factor(tech.phi, d) for d in smap.durations]
    decay = np.array([f.decay for f in factors])
    accum = np.array([f.accum for f in factors])
    j = np.arange(J)
    i = smap.theta - 1
    rows = _Rows()
    nc_cols, nc_vals = _net_charge_terms(form, i, -accum)
    rows.add(
        [("coupling", k + 1) for k in j],
        [j, (j - 1) % J, *nc_cols],
        [1.0, -decay, *nc_vals],
        0.0,
        0.0,
    )
    rows.add([("level_min", k + 1) for k in j], [j], [1.0], 0.0, np.inf)
    rows.add([("level_max", k + 1) for k in j], [j, form.col_E()], [1.0, -1.0], -np.inf, 0.0)
    return rows.finish(form)


def build_proposed(smap: StorageMap, tech: StorageTech, n_rep: int | None = None) -> StorageFormulation:
    """Reduced representation: one level per run of identical representative steps."""
    n_rep = int(smap.theta.max()) if n_rep is None else n_rep
    return _chain(smap, tech, "Proposed", n_rep)


def full_resolution_map(agg: Aggregation) -> StorageMap:
    """Hourly storage map: every hour is its own storage step."""
    T = agg.horizon
    return StorageMap(np.arange(1, T + 1), agg.sequence, np.ones(T, dtype=np.int64))


def build_full_resolution(agg: Aggregation, tech: StorageTech) -> StorageFormulation:
    """One level per original hour, linked to flows through the sequence."""
    return _chain(full_resolution_map(agg), tech, "FullResolution", agg.n_steps)


def build_chrono(smap: StorageMap, tech: StorageTech, n_rep: int | None = None) -> StorageFormulation:
    if not np.array_equal(smap.theta, np.arange(1, smap.n_steps + 1)):
        raise NotChronological("chronological storage requires theta to be the identity")
    n_rep = smap.n_steps if n_rep is None else n_rep
    return _chain(smap, tech, "Chrono", n_rep)


def build_superposition(
    agg: Aggregation,
    tech: StorageTech,
    hourly_limit: bool = True,
    original_exponent: bool = False,
) -> StorageFormulation:
    """Inter-day plus intra-day superposition for representative days.

    Hours of the day are indexed ``h = 0..23``; the intra level at ``h`` is the
    level change since the start of the day, before hour ``h`` is operated, so
    ``L_intra[p, 0] = 0``. The level before hour ``h`` of day ``d`` is
    ``L_inter[d] * (1-phi)^h + L_intra[psi(d), h]``.

    Parameters
    ----------
    hourly_limit : bool
        True bounds the combined level every hour (``Superposition``); False
        bounds it with daily envelopes of the intra level (``MinMax``).
    original_exponent : bool
        Use ``(1-phi)^24`` for every hour in the hourly limit. This reproduces a
        known flaw and exists only for regression tests.
    """
    if agg.mode != "RD":
        raise WrongMode(f"superposition needs RD aggregation, got {agg.mode}")
    H = HOURS_PER_DAY
    P = agg.n_days
    psi = agg.day_sequence - 1
    D = psi.size
    q = 1.0 - tech.phi
    method = "Superposition" if hourly_limit else "MinMax"
    form = StorageFormulation(method, tech, agg.n_steps)
    intra_lb = np.full((P, H), -np.inf)
    intra_ub = np.full((P, H), np.inf)
    intra_lb[:, 0] = intra_ub[:, 0] = 0.0
    form.var_blocks = [
        ("L_inter", [(d,) for d in range(1, D + 1)], np.full(D, -np.inf), np.full(D, np.inf)),
        (
            "L_intra",
            [(p, h) for p in range(1, P + 1) for h in range(H)],
            intra_lb.ravel(),
            intra_ub.ravel(),
        ),
    ]
    if not hourly_limit:
        form.var_blocks += [
            ("L_intra_max", [(p,) for p in range(1, P + 1)], np.full(P, -np.inf), np.full(P, np.inf)),
            ("L_intra_min", [(p,) for p in range(1, P + 1)], np.full(P, -np.inf), np.full(P, np.inf)),
        ]
    inter = np.arange(D)
    intra = D + np.arange(P * H).reshape(P, H)
    rows = _Rows()

    # intra-day recursion
    p_idx, h_idx = np.divmod(np.arange(P * (H - 1)), H - 1)
    nc_cols, nc_vals = _net_charge_terms(form, p_idx * H + h_idx, -1.0)
    rows.add(
        [("intra", p + 1, h + 1) for p, h in zip(p_idx, h_idx)],
        [intra[p_idx, h_idx + 1], intra[p_idx, h_idx], *nc_cols],
        [1.0, -q, *nc_vals],
        0.0,
        0.0,
    )
    # inter-day coupling with the last intra hour substituted, periodic over the year
    last = psi * H + (H - 1)
    nc_cols, nc_vals = _net_charge_terms(form, last, -1.0)
    rows.add(
        [("inter", d + 1) for d in inter],
        [(inter + 1) % D, inter, intra[psi, H - 1], *nc_cols],
        [1.0, -(q**H), -q, *nc_vals],
        0.0,
        0.0,
    )
    if hourly_limit:
        d_idx, h_idx = np.divmod(np.arange(D * H), H)
        expo = np.full(D * H, H) if original_exponent else h_idx
        coef = q ** expo.astype(float)
        labels = [(d + 1, h) for d, h in zip(d_idx, h_idx)]
        rows.add(
            [("level_min", *lab) for lab in labels],
            [inter[d_idx], intra[psi[d_idx], h_idx]],
            [coef, 1.0],
            0.0,
            np.inf,
        )
        rows.add(
            [("level_max", *lab) for lab in labels],
            [inter[d_idx], intra[psi[d_idx], h_idx], form.col_E()],
            [coef, 1.0, -1.0],
            -np.inf,
            0.0,
        )
        form.predicted = (D + P * H, 2 * D * H + P * (H - 1) + D)
        form.limit_rows = 2 * D * H
    else:
        lmax = D + P * H + np.arange(P)
        lmin = lmax + P
        p_idx, h_idx = np.divmod(np.arange(P * H), H)
        labels = [(p + 1, h) for p, h in zip(p_idx, h_idx)]
        rows.add(
            [("intra_max", *lab) for lab in labels],
            [lmax[p_idx], intra[p_idx, h_idx]],
            [1.0, -1.0],
            0.0,
            np.inf,
        )
        rows.add(
            [("intra_min", *lab) for lab in labels],
            [lmin[p_idx], intra[p_idx, h_idx]],
            [1.0, -1.0],
            -np.inf,
            0.0,
        )
        rows.add(
            [("day_max", d + 1) for d in inter],
            [inter, lmax[psi], form.col_E()],
            [1.0, 1.0, -1.0],
            -np.inf,
            0.0,
        )
        rows.add(
            [("day_min", d + 1) for d in inter],
            [inter, lmin[psi]],
            [q**H, 1.0],
            0.0,
            np.inf,
        )
        form.predicted = (D + P * H + 2 * P, 2 * P * H + 2 * D + P * (H - 1) + D)
        form.limit_rows = 2 * P * H + 2 * D
    return rows.finish(form)


def predict_sizes(method: str, agg: Aggregation) -> tuple[int, int]:
    """Closed-form ``(num_vars, num_constraints)`` per technology and node."""
    T, I = agg.horizon, agg.n_steps
    H = HOURS_PER_DAY
    if method == "FullResolution":
        return T, 3 * T
    if method == "Proposed":
        J = count_storage_steps(agg)
        return J, 3 * J
    if method == "Chrono":
        if agg.mode not in ("CRH", "Full") or np.any(np.diff(agg.sequence) < 0):
            raise WrongMode(f"Chrono needs a chronological aggregation, got {agg.mode}")
        return I, 3 * I
    if method in ("Superposition", "MinMax"):
        if agg.mode != "RD":
            raise WrongMode(f"{method} needs RD aggregation, got {agg.mode}")
        P, D = agg.n_days, T // H
        if method == "Superposition":
            return D + P * H, 2 * D * H + P * (H - 1) + D
        return D + P * H + 2 * P, 2 * P * H + 2 * D + P * (H - 1) + D
    raise ValueError(f"unknown storage method {method!r}")


def limit_constraint_counts(P: int, D: int, H: int = HOURS_PER_DAY) -> dict[str, int]:
    """Rows bounding the level against 0 and E for the two superposition variants."""
    return {"Superposition": 2 * D * H, "MinMax": 2 * P * H + 2 * D}


def build_formulation(method: str, agg: Aggregation, tech: StorageTech) -> StorageFormulation:
    """Build the storage block of ``method`` on ``agg``."""
    if method == "Proposed":
        return build_proposed(build_storage_map(agg.sequence), tech, agg.n_steps)
    if method == "FullResolution":
        return build_full_resolution(agg, tech)
    if method == "Chrono":
        if agg.mode not in ("CRH", "Full"):
            raise WrongMode(f"Chrono needs CRH aggregation, got {agg.mode}")
        return build_chrono(build_storage_map_chrono(agg), tech, agg.n_steps)
    if method == "Superposition":
        return build_superposition(agg, tech, hourly_limit=True)
    if method == "MinMax":
        return build_superposition(agg, tech, hourly_limit=False)
    raise ValueError(f"unknown storage method {method!r}")
