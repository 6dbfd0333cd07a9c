"""Solver-ready linear programs: in-memory form, CPLEX-LP and fixed-MPS text.

Rows are stored in range form ``lo <= A x <= hi``; the writers only emit
``=``, ``<=`` and ``>=`` rows and split genuinely ranged rows in two.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from storax.errors import ParseError, ValidationError

INF = np.inf
_TERMS_PER_LINE = 6


@dataclass
class LinearProgram:
    """Minimization problem ``min c x  s.t.  lo <= A x <= hi,  lb <= x <= ub``.

    ``col_groups``/``row_groups`` map a group key (a tuple such as
    ``("gen", "solar", "n1")``) to the global indices of that group, in
    representative-step order where applicable.
    """

    col_names: list[str]
    lb: np.ndarray
    ub: np.ndarray
    cost: np.ndarray
    A: sp.csr_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    row_names: list[str]
    col_groups: dict = field(default_factory=dict)
    row_groups: dict = field(default_factory=dict)
    infeasible_rows: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_cols(self) -> int:
        return len(self.col_names)

    @property
    def n_rows(self) -> int:
        return len(self.row_names)

    def check(self) -> None:
        n, m = self.n_cols, self.n_rows
        if self.A.shape != (m, n):
            raise ValidationError(f"matrix shape {self.A.shape} != ({m}, {n})")
        for arr, size, what in (
            (self.lb, n, "lb"),
            (self.ub, n, "ub"),
            (self.cost, n, "cost"),
            (self.row_lo, m, "row_lo"),
            (self.row_hi, m, "row_hi"),
        ):
            if arr.shape != (size,):
                raise ValidationError(f"{what} has shape {arr.shape}, expected ({size},)")
        if np.any(np.diff(self.A.tocsr().indptr) == 0):
            raise ValidationError("empty constraint row")
        if len(set(self.col_names)) != n or len(set(self.row_names)) != m:
            raise ValidationError("duplicate variable or constraint names")

    def col_index(self) -> dict[str, int]:
        return {name: k for k, name in enumerate(self.col_names)}

    def row_index(self) -> dict[str, int]:
        return {name: k for k, name in enumerate(self.row_names)}


def _label(prefix: str, key) -> str:
    if not isinstance(key, tuple):
        key = (key,)
    return f"{prefix}({','.join(map(str, key))})" if key else prefix


class LPBuilder:
    """Incremental assembly of a :class:`LinearProgram` from vectorized blocks."""

    def __init__(self):
        self.names: list[str] = []
        self.lb, self.ub, self.cost = [], [], []
        self.n_cols = 0
        self.r, self.c, self.v = [], [], []
        self.row_lo, self.row_hi, self.row_names = [], [], []
        self.n_rows = 0
        self.col_groups: dict = {}
        self.row_groups: dict = {}

    def add_vars(self, group, prefix, keys, lb=0.0, ub=INF, cost=0.0) -> np.ndarray:
        k = len(keys)
        idx = np.arange(self.n_cols, self.n_cols + k)
        self.names.extend(_label(prefix, key) for key in keys)
        self.lb.append(np.broadcast_to(np.asarray(lb, float), (k,)))
        self.ub.append(np.broadcast_to(np.asarray(ub, float), (k,)))
        self.cost.append(np.broadcast_to(np.asarray(cost, float), (k,)))
        self.n_cols += k
        if group is not None:
            self.col_groups[group] = idx
        return idx

    def add_rows(self, group, prefix, keys, cols, vals, lo, hi) -> np.ndarray:
        """Add ``len(keys)`` rows; each entry of ``cols``/``vals`` is one term per row."""
        k = len(keys)
        idx = np.arange(self.n_rows, self.n_rows + k)
        for cc, vv in zip(cols, vals):
            self.r.append(idx)
            self.c.append(np.broadcast_to(np.asarray(cc, dtype=np.int64), (k,)))
            self.v.append(np.broadcast_to(np.asarray(vv, dtype=float), (k,)))
        self._finish_rows(group, prefix, keys, idx, lo, hi)
        return idx

    def add_matrix_rows(self, group, prefix, keys, matrix: sp.csr_matrix, col_map, lo, hi):
        """Add rows given as a sparse block over a local column space mapped by ``col_map``."""
        k = len(keys)
        idx = np.arange(self.n_rows, self.n_rows + k)
        coo = matrix.tocoo()
        self.r.append(idx[coo.row])
        self.c.append(np.asarray(col_map)[coo.col])
        self.v.append(coo.data.astype(float))
        self._finish_rows(group, prefix, keys, idx, lo, hi)
        return idx

    def _finish_rows(self, group, prefix, keys, idx, lo, hi):
        k = len(keys)
        self.row_lo.append(np.broadcast_to(np.asarray(lo, float), (k,)))
        self.row_hi.append(np.broadcast_to(np.asarray(hi, float), (k,)))
        self.row_names.extend(_label(prefix, key) for key in keys)
        self.n_rows += k
        if group is not None:
            self.row_groups[group] = idx

    def build(self) -> LinearProgram:
        """Assemble; rows left without terms are dropped or recorded as infeasible."""
        cat = lambda parts: np.concatenate(parts) if parts else np.empty(0)  # noqa: E731
        A = sp.coo_matrix(
            (cat(self.v), (cat(self.r).astype(np.int64), cat(self.c).astype(np.int64))),
            shape=(self.n_rows, self.n_cols),
        ).tocsr()
        A.sum_duplicates()
        A.eliminate_zeros()
        lo, hi = cat(self.row_lo), cat(self.row_hi)
        empty = np.diff(A.indptr) == 0
        infeasible = [self.row_names[k] for k in np.flatnonzero(empty & ((lo > 0) | (hi < 0)))]
        keep = np.flatnonzero(~empty)
        remap = np.full(self.n_rows, -1)
        remap[keep] = np.arange(keep.size)
        row_groups = {}
        for key, idx in self.row_groups.items():
            new = remap[idx]
            row_groups[key] = new[new >= 0]
        return LinearProgram(
            col_names=self.names,
            lb=cat(self.lb).copy(),
            ub=cat(self.ub).copy(),
            cost=cat(self.cost).copy(),
            A=A[keep],
            row_lo=lo[keep].copy(),
            row_hi=hi[keep].copy(),
            row_names=[self.row_names[k] for k in keep],
            col_groups=dict(self.col_groups),
            row_groups=row_groups,
            infeasible_rows=infeasible,
        )


# --------------------------------------------------------------------------- writers


def _num(v: float) -> str:
    if v == INF:
        return "+inf"
    if v == -INF:
        return "-inf"
    return repr(float(v))


def _split_rows(lp: LinearProgram):
    """Yield ``(name, cols, vals, sense, rhs)`` with ranged rows split in two."""
    A = lp.A.tocsr()
    for k, name in enumerate(lp.row_names):
        s, e = A.indptr[k], A.indptr[k + 1]
        cols, vals = A.indices[s:e], A.data[s:e]
        lo, hi = lp.row_lo[k], lp.row_hi[k]
        if lo == hi:
            yield name, cols, vals, "=", lo
        elif np.isinf(lo) and np.isinf(hi):
            continue
        elif np.isinf(hi):
            yield name, cols, vals, ">=", lo
        elif np.isinf(lo):
            yield name, cols, vals, "<=", hi
        else:
            yield name + "_lo", cols, vals, ">=", lo
            yield name + "_hi", cols, vals, "<=", hi


def _terms(cols, vals, names) -> list[str]:
    order = sorted(range(len(cols)), key=lambda k: names[cols[k]])
    out = []
    for k in order:
        v = vals[k]
        out.append(f"{'-' if v < 0 else '+'} {_num(abs(v))} {names[cols[k]]}")
    return out


def _wrap(head: str, terms: list[str], tail: str = "") -> list[str]:
    lines = []
    for k in range(0, max(len(terms), 1), _TERMS_PER_LINE):
        chunk = " ".join(terms[k : k + _TERMS_PER_LINE])
        lines.append((head if k == 0 else "   ") + chunk)
    if tail:
        lines[-1] += " " + tail
    return lines


def lp_text(lp: LinearProgram) -> str:
    """CPLEX-LP text with rows and objective terms sorted by name."""
    if lp.infeasible_rows:
        raise ValidationError(f"LP has trivially infeasible empty rows: {lp.infeasible_rows[:3]}")
    names = lp.col_names
    out = ["\\ written by storax", "Minimize"]
    nz = np.flatnonzero(lp.cost)
    obj_terms = _terms(nz, lp.cost[nz], names)
    if not obj_terms:
        obj_terms = [f"+ 0 {names[0]}"] if names else []
    out += _wrap(" obj: ", obj_terms)
    out.append("Subject To")
    for name, cols, vals, sense, rhs in sorted(_split_rows(lp), key=lambda r: r[0]):
        out += _wrap(f" {name}: ", _terms(cols, vals, names), f"{sense} {_num(rhs)}")
    out.append("Bounds")
    for k in sorted(range(lp.n_cols), key=lambda k: names[k]):
        lb, ub, n = lp.lb[k], lp.ub[k], names[k]
        if lb == 0.0 and ub == INF:
            out.append(f" {n} >= 0")
        elif lb == ub:
            out.append(f" {n} = {_num(lb)}")
        elif lb == 0.0:
            out.append(f" {n} <= {_num(ub)}")
        elif ub == INF and lb != -INF:
            out.append(f" {n} >= {_num(lb)}")
        else:
            out.append(f" {_num(lb)} <= {n} <= {_num(ub)}")
    out.append("End")
    return "\n".join(out) + "\n"


def _mps_line(f1: str, f2: str, f3: str = "", f4: str = "") -> str:
    line = " " + f1.ljust(2) + " " + f2.ljust(8)
    if f3:
        line += "  " + f3.ljust(8) + "  " + f4
    return line.rstrip()


def mps_text(lp: LinearProgram) -> str:
    """Fixed-format MPS using positional names ``C0000001`` / ``R0000001``.

    One coefficient per line, so a number wider than its 12-character field
    only overruns the end of the line.
    """
    if lp.infeasible_rows:
        raise ValidationError(f"LP has trivially infeasible empty rows: {lp.infeasible_rows[:3]}")
    rows = sorted(_split_rows(lp), key=lambda r: r[0])
    cname = [f"C{k + 1:07d}" for k in range(lp.n_cols)]
    rname = [f"R{k + 1:07d}" for k in range(len(rows))]
    out = ["NAME          STORAX", "ROWS", _mps_line("N", "OBJ")]
    code = {"=": "E", "<=": "L", ">=": "G"}
    for rn, (_, _, _, sense, _) in zip(rname, rows):
        out.append(_mps_line(code[sense], rn))
    by_col: list[list[tuple[str, float]]] = [[] for _ in range(lp.n_cols)]
    for k, c in enumerate(lp.cost):
        if c != 0.0:
            by_col[k].append(("OBJ", c))
    for rn, (_, cols, vals, _, _) in zip(rname, rows):
        for c, v in zip(cols, vals):
            by_col[c].append((rn, v))
    out.append("COLUMNS")
    for k in range(lp.n_cols):
        entries = by_col[k] or [("OBJ", 0.0)]
        for rn, v in entries:
            out.append("    " + cname[k].ljust(8) + "  " + rn.ljust(8) + "  " + repr(float(v)))
    out.append("RHS")
    for rn, (_, _, _, _, rhs) in zip(rname, rows):
        if rhs != 0.0:
            out.append("    " + "RHS".ljust(8) + "  " + rn.ljust(8) + "  " + repr(float(rhs)))
    out.append("BOUNDS")
    for k in range(lp.n_cols):
        lb, ub, cn = lp.lb[k], lp.ub[k], cname[k]
        pre = " {} BND       " + cn.ljust(8)
        if lb == ub:
            out.append((pre + "  {}").format("FX", repr(float(lb))))
            continue
        if lb == -INF and ub == INF:
            out.append(pre.format("FR"))
            continue
        if lb == -INF:
            out.append(pre.format("MI"))
        elif lb != 0.0:
            out.append((pre + "  {}").format("LO", repr(float(lb))))
        if ub != INF:
            out.append((pre + "  {}").format("UP", repr(float(ub))))
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def emit_lp(lp: LinearProgram, path: str | Path, format: str = "lp_file") -> Path:
    """Write ``lp`` as CPLEX-LP (``lp_file``) or fixed MPS (``mps``)."""
    path = Path(path)
    if format == "lp_file":
        text = lp_text(lp)
    elif format == "mps":
        text = mps_text(lp)
    else:
        raise ValueError(f"unknown LP format {format!r}")
    path.write_text(text, encoding="utf-8")
    return path


# --------------------------------------------------------------------------- readers

_TOKEN = re.compile(
    r"\s*(?:(?P<num>[0-9]+\.?[0-9]*(?:[eE][+-]?[0-9]+)?|\.[0-9]+(?:[eE][+-]?[0-9]+)?)"
    r"|(?P<rel><=|>=|=<|=>|<|>|=)|(?P<sign>[+-])|(?P<colon>:)|(?P<name>[^\s+\-<>=:]+))"
)


def _tokens(text: str):
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"cannot tokenize near {text[pos:pos + 20]!r}")
        kind = m.lastgroup
        val = m.group(kind)
        if kind == "name" and val.lower() in ("inf", "infinity"):
            kind, val = "num", "inf"
        out.append((kind, val))
        pos = m.end()
    return out


def _parse_expr(toks, k):
    """Parse ``[sign] [coef] name ...`` until a relational operator or the end."""
    terms = []
    while k < len(toks) and toks[k][0] != "rel":
        sign = 1.0
        while k < len(toks) and toks[k][0] == "sign":
            sign *= -1.0 if toks[k][1] == "-" else 1.0
            k += 1
        coef = 1.0
        if k < len(toks) and toks[k][0] == "num":
            coef = float(toks[k][1])
            k += 1
        if k >= len(toks) or toks[k][0] != "name":
            raise ParseError("expected a variable name in linear expression")
        terms.append((toks[k][1], sign * coef))
        k += 1
    return terms, k


def _parse_number(toks, k):
    sign = 1.0
    while toks[k][0] == "sign":
        sign *= -1.0 if toks[k][1] == "-" else 1.0
        k += 1
    if toks[k][0] != "num":
        raise ParseError(f"expected a number, got {toks[k][1]!r}")
    return sign * float(toks[k][1]), k + 1


def read_lp_text(text: str) -> LinearProgram:
    """Parse the CPLEX-LP subset written by :func:`lp_text`."""
    sections: dict[str, list[str]] = {"obj": [], "st": [], "bounds": []}
    current = None
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].rstrip()
        low = line.strip().lower()
        if not low:
            continue
        if low in ("minimize", "minimum", "min"):
            current = "obj"
        elif low in ("maximize", "maximum", "max"):
            raise ParseError("only minimization problems are supported")
        elif low in ("subject to", "such that", "st", "s.t."):
            current = "st"
        elif low in ("bounds", "bound"):
            current = "bounds"
        elif low == "end":
            current = None
        elif current is None:
            raise ParseError(f"text outside of a section: {line!r}")
        else:
            sections[current].append(line)

    col_pos: dict[str, int] = {}

    def col(name):
        if name not in col_pos:
            col_pos[name] = len(col_pos)
        return col_pos[name]

    cost_terms = []
    toks = _tokens(" ".join(sections["obj"]))
    if toks:
        k = 2 if len(toks) > 1 and toks[1][0] == "colon" else 0
        terms, _ = _parse_expr(toks, k)
        cost_terms = [(col(n), v) for n, v in terms]

    rows = []
    for stmt in _statements(sections["st"]):
        toks = _tokens(stmt)
        if len(toks) < 2 or toks[1][0] != "colon":
            raise ParseError(f"constraint without a name: {stmt!r}")
        terms, k = _parse_expr(toks, 2)
        rel = toks[k][1].replace("=<", "<=").replace("=>", ">=")
        rhs, _ = _parse_number(toks, k + 1)
        rows.append((toks[0][1], [(col(n), v) for n, v in terms], rel, rhs))

    bounds = {}
    for line in sections["bounds"]:
        toks = _tokens(line)
        kinds = [t[0] for t in toks]
        if kinds == ["name", "name"] and toks[1][1].lower() == "free":
            bounds[toks[0][1]] = (-INF, INF)
            continue
        if kinds and kinds[0] == "name":
            name, rel = toks[0][1], toks[1][1]
            val, _ = _parse_number(toks, 2)
            lb, ub = bounds.get(name, (0.0, INF))
            if rel in ("=",):
                lb = ub = val
            elif rel in ("<=", "<", "=<"):
                ub = val
            else:
                lb = val
            bounds[name] = (lb, ub)
            continue
        lo, k = _parse_number(toks, 0)
        name = toks[k + 1][1]
        hi, _ = _parse_number(toks, k + 3)
        bounds[name] = (lo, hi)
    for name in bounds:
        col(name)

    n = len(col_pos)
    names = [None] * n
    for name, k in col_pos.items():
        names[k] = name
    lb = np.zeros(n)
    ub = np.full(n, INF)
    for name, (lo, hi) in bounds.items():
        lb[col_pos[name]], ub[col_pos[name]] = lo, hi
    cost = np.zeros(n)
    for c, v in cost_terms:
        cost[c] += v
    r, c, v, lo_arr, hi_arr, rnames = [], [], [], [], [], []
    for k, (name, terms, rel, rhs) in enumerate(rows):
        for cc, vv in terms:
            r.append(k)
            c.append(cc)
            v.append(vv)
        rnames.append(name)
        lo_arr.append(rhs if rel in ("=", ">=", ">") else -INF)
        hi_arr.append(rhs if rel in ("=", "<=", "<") else INF)
    A = sp.coo_matrix((v, (r, c)), shape=(len(rows), n)).tocsr()
    A.sum_duplicates()
    return LinearProgram(names, lb, ub, cost, A, np.array(lo_arr), np.array(hi_arr), rnames)


def _statements(lines: list[str]):
    """Group continuation lines (leading whitespace, no ``name:``) with their row."""
    buf = []
    for line in lines:
        starts_new = re.match(r"\s*[^\s:+\-<>=]+\s*:", line) is not None
        if starts_new and buf:
            yield " ".join(buf)
            buf = []
        buf.append(line)
    if buf:
        yield " ".join(buf)


def read_mps_text(text: str) -> LinearProgram:
    """Parse MPS (fixed or free layout, whitespace-separated fields)."""
    section = None
    obj_row = None
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    col_order: dict[str, int] = {}
    entries: list[tuple[str, str, float]] = []
    rhs: dict[str, float] = {}
    bounds: dict[str, list[float]] = {}
    for raw in text.splitlines():
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw[0].isspace():
            section = raw.split()[0].upper()
            if section == "ENDATA":
                break
            continue
        f = raw.split()
        if section == "ROWS":
            sense, name = f[0].upper(), f[1]
            if sense == "N":
                obj_row = obj_row or name
            else:
                row_sense[name] = sense
                row_order.append(name)
        elif section == "COLUMNS":
            if "'MARKER'" in f:
                raise ParseError("integer markers are not supported")
            cname = f[0]
            col_order.setdefault(cname, len(col_order))
            for k in range(1, len(f) - 1, 2):
                entries.append((cname, f[k], float(f[k + 1])))
        elif section == "RHS":
            pairs = f[1:] if len(f) % 2 else f
            for k in range(0, len(pairs) - 1, 2):
                rhs[pairs[k]] = float(pairs[k + 1])
        elif section == "BOUNDS":
            kind, cname = f[0].upper(), f[2]
            b = bounds.setdefault(cname, [0.0, INF])
            val = float(f[3]) if len(f) > 3 else None
            if kind == "UP":
                b[1] = val
            elif kind == "LO":
                b[0] = val
            elif kind == "FX":
                b[0] = b[1] = val
            elif kind == "FR":
                b[0], b[1] = -INF, INF
            elif kind == "MI":
                b[0] = -INF
            elif kind == "PL":
                b[1] = INF
            else:
                raise ParseError(f"unsupported bound type {kind}")
        elif section in ("RANGES",):
            raise ParseError("RANGES section is not supported")
        else:
            raise ParseError(f"unexpected data in section {section!r}")
    n = len(col_order)
    names = [None] * n
    for name, k in col_order.items():
        names[k] = name
    rindex = {name: k for k, name in enumerate(row_order)}
    cost = np.zeros(n)
    r, c, v = [], [], []
    for cname, rname, val in entries:
        if rname == obj_row:
            cost[col_order[cname]] += val
        else:
            r.append(rindex[rname])
            c.append(col_order[cname])
            v.append(val)
    m = len(row_order)
    A = sp.coo_matrix((v, (r, c)), shape=(m, n)).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    lo, hi = np.full(m, -INF), np.full(m, INF)
    for name, k in rindex.items():
        b = rhs.get(name, 0.0)
        s = row_sense[name]
        if s in ("E", "G"):
            lo[k] = b
        if s in ("E", "L"):
            hi[k] = b
    lb, ub = np.zeros(n), np.full(n, INF)
    for name, (blo, bhi) in bounds.items():
        lb[col_order[name]], ub[col_order[name]] = blo, bhi
    return LinearProgram(names, lb, ub, cost, A, lo, hi, row_order)


def read_lp(path: str | Path, format: str | None = None) -> LinearProgram:
    path = Path(path)
    format = format or ("mps" if path.suffix.lower() == ".mps" else "lp_file")
    text = path.read_text(encoding="utf-8")
    return read_mps_text(text) if format == "mps" else read_lp_text(text)


def same_program(a: LinearProgram, b: LinearProgram, by_name: bool = True) -> bool:
    """True if both programs have identical data after aligning columns and rows.

    With ``by_name`` columns and rows are matched by name; otherwise ``b`` is
    assumed to list columns in ``a``'s order and rows in name-sorted order (the
    positional layout of :func:`mps_text`).
    """
    if (a.n_cols, a.n_rows) != (b.n_cols, b.n_rows):
        return False
    if by_name:
        bc = b.col_index()
        br = b.row_index()
        try:
            cperm = np.array([bc[n] for n in a.col_names], dtype=np.int64)
            rperm = np.array([br[n] for n in a.row_names], dtype=np.int64)
        except KeyError:
            return False
    else:
        cperm = np.arange(a.n_cols)
        order = sorted(range(a.n_rows), key=lambda k: a.row_names[k])
        rperm = np.empty(a.n_rows, dtype=np.int64)
        rperm[order] = np.arange(a.n_rows)
    bA = b.A.tocsr()[rperm][:, cperm]
    diff = (a.A.tocsr() - bA).tocsr()
    diff.eliminate_zeros()
    return (
        diff.nnz == 0
        and np.array_equal(a.lb, b.lb[cperm])
        and np.array_equal(a.ub, b.ub[cperm])
        and np.array_equal(a.cost, b.cost[cperm])
        and np.array_equal(a.row_lo, b.row_lo[rperm])
        and np.array_equal(a.row_hi, b.row_hi[rperm])
    )
