"""Solver backends: embedded HiGHS, embedded Clarabel and an external process driven by LP files.

HiGHS (simplex with crossover) gives vertex solutions and is the reference
choice for small models. Long storage chains make its interior-point method
slow, so ``kind="auto"`` hands models above :data:`AUTO_COLUMN_LIMIT` columns
to Clarabel, whose direct-factorization interior point scales much better on
them, and falls back to HiGHS if Clarabel stops short of full accuracy.
"""

from __future__ import annotations

import os
import shlex
import shutil
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from storax.errors import ParseError, SolverFailure, SolverNotFound
from storax.lp import LinearProgram, emit_lp

SOLVER_ENV = "STORAX_SOLVER"
TOLERANCE = 1e-6
# Clarabel's stopping tolerances. Its residuals are relative to problem norms,
# and at 1e-8 full-year objectives still drift by ~1e-5, so it runs tighter.
CLARABEL_TOLERANCE = 1e-10
AUTO_COLUMN_LIMIT = 5000
STATUSES = ("optimal", "infeasible", "unbounded", "error")


@dataclass(frozen=True)
class Solution:
    """Solver result. ``x`` and ``row_dual`` follow the LP's column/row order."""

    status: str
    objective: float
    x: np.ndarray
    row_dual: np.ndarray | None
    solve_time: float
    lp: LinearProgram = field(repr=False, compare=False, default=None)
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def primal(self) -> dict[str, float]:
        return dict(zip(self.lp.col_names, self.x.tolist()))

    def duals(self) -> dict[str, float]:
        if self.row_dual is None:
            return {}
        return dict(zip(self.lp.row_names, self.row_dual.tolist()))

    def group(self, *key) -> np.ndarray:
        return self.x[self.lp.col_groups[key]]

    def group_dual(self, *key) -> np.ndarray:
        return self.row_dual[self.lp.row_groups[key]]

    def max_violation(self) -> float:
        """Largest bound or row violation of the primal point."""
        lp = self.lp
        act = lp.A @ self.x
        v = [
            np.max(lp.lb - self.x, initial=0.0),
            np.max(self.x - lp.ub, initial=0.0),
            np.max(lp.row_lo - act, initial=0.0),
            np.max(act - lp.row_hi, initial=0.0),
        ]
        return float(max(v))


@dataclass(frozen=True)
class SolverSpec:
    """Backend descriptor.

    ``kind`` is ``auto`` (default), ``highs`` or ``clarabel`` (embedded) or
    ``external``. ``algorithm`` selects the HiGHS method. For external solvers the
    ``command`` template may use ``{solver}``, ``{model}`` and ``{solution}``;
    ``solver`` is overridden by the ``STORAX_SOLVER`` environment variable.
    """

    kind: str = "auto"
    algorithm: str = "choose"
    command: str = "{solver} --model_file {model} --solution_file {solution} --write_solution_style 0"
    solver: str = "highs"
    model_format: str = "lp_file"
    result_format: str = "highs"
    time_limit: float | None = None
    threads: int | None = None

    @classmethod
    def from_dict(cls, data: dict | None) -> "SolverSpec":
        return cls(**(data or {}))


def _status_name(text: str) -> str:
    t = text.strip().lower()
    if t == "optimal":
        return "optimal"
    if "infeasible" in t and "unbounded" not in t:
        return "infeasible"
    if "unbounded" in t:
        # HiGHS reports "Primal infeasible or unbounded" when presolve cannot tell
        return "infeasible" if "infeasible" in t else "unbounded"
    return "error"


def _infeasible_stub(lp: LinearProgram) -> Solution:
    return Solution(
        "infeasible",
        float("nan"),
        np.full(lp.n_cols, np.nan),
        None,
        0.0,
        lp,
        f"empty rows cannot be satisfied: {', '.join(lp.infeasible_rows[:5])}",
    )


def _solve_highs(lp: LinearProgram, spec: SolverSpec) -> Solution:
    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("primal_feasibility_tolerance", TOLERANCE)
    h.setOptionValue("dual_feasibility_tolerance", TOLERANCE)
    h.setOptionValue("solver", spec.algorithm)
    if spec.time_limit:
        h.setOptionValue("time_limit", float(spec.time_limit))
    if spec.threads:
        h.setOptionValue("threads", int(spec.threads))
    model = highspy.HighsLp()
    model.num_col_ = lp.n_cols
    model.num_row_ = lp.n_rows
    model.col_cost_ = lp.cost
    model.col_lower_ = lp.lb
    model.col_upper_ = lp.ub
    model.row_lower_ = lp.row_lo
    model.row_upper_ = lp.row_hi
    csc = lp.A.tocsc()
    csc.sort_indices()
    model.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    model.a_matrix_.start_ = csc.indptr.astype(np.int32)
    model.a_matrix_.index_ = csc.indices.astype(np.int32)
    model.a_matrix_.value_ = csc.data
    h.passModel(model)
    t0 = time.perf_counter()
    h.run()
    elapsed = time.perf_counter() - t0
    status_text = h.modelStatusToString(h.getModelStatus())
    status = _status_name(status_text)
    sol = h.getSolution()
    if status != "optimal":
        return Solution(status, float("nan"), np.full(lp.n_cols, np.nan), None, elapsed, lp, status_text)
    x = np.array(sol.col_value)
    duals = np.array(sol.row_dual) if sol.dual_valid else None
    obj = float(h.getInfo().objective_function_value)
    return Solution(status, obj, x, duals, elapsed, lp, status_text)


def _solve_clarabel(lp: LinearProgram, spec: SolverSpec) -> Solution:
    """Interior-point solve of ``lp`` as a conic program with zero and nonnegative cones.

    Clarabel solves ``min c x  s.t.  M x + s = b,  s in K`` with dual ``z``.
    Equality rows enter the zero cone; ``<=`` rows as ``A x + s = hi``, ``>=``
    rows as ``-A x + s = -lo`` and finite column bounds as identity rows. The
    HiGHS-convention row dual (``c = A' y + reduced costs``) is ``-z`` for
    equality and ``<=`` parts and ``+z`` for ``>=`` parts, summed per row.
    """
    import clarabel
    import scipy.sparse as sp

    A = lp.A.tocsr()
    lo, hi = lp.row_lo, lp.row_hi
    eq = np.flatnonzero(lo == hi)
    upper = np.flatnonzero((lo != hi) & np.isfinite(hi))
    lower = np.flatnonzero((lo != hi) & np.isfinite(lo))
    n = lp.n_cols
    eye = sp.identity(n, format="csr")
    col_lo = np.flatnonzero(np.isfinite(lp.lb))
    col_hi = np.flatnonzero(np.isfinite(lp.ub))
    M = sp.vstack([A[eq], A[upper], -A[lower], -eye[col_lo], eye[col_hi]]).tocsc()
    b = np.concatenate([lo[eq], hi[upper], -lo[lower], -lp.lb[col_lo], lp.ub[col_hi]])
    cones = [
        clarabel.ZeroConeT(eq.size),
        clarabel.NonnegativeConeT(upper.size + lower.size + col_lo.size + col_hi.size),
    ]
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = 1000
    settings.tol_gap_abs = settings.tol_gap_rel = settings.tol_feas = CLARABEL_TOLERANCE
    if spec.time_limit:
        settings.time_limit = float(spec.time_limit)
    t0 = time.perf_counter()
    result = clarabel.DefaultSolver(sp.csc_matrix((n, n)), lp.cost, M, b, cones, settings).solve()
    elapsed = time.perf_counter() - t0
    text = str(result.status)
    if text != "Solved":
        status = {"PrimalInfeasible": "infeasible", "DualInfeasible": "unbounded"}.get(text, "error")
        return Solution(status, float("nan"), np.full(n, np.nan), None, elapsed, lp, f"clarabel: {text}")
    x = np.array(result.x)
    z = np.array(result.z)
    duals = np.zeros(lp.n_rows)
    k = 0
    for rows, sign in ((eq, -1.0), (upper, -1.0), (lower, 1.0)):
        np.add.at(duals, rows, sign * z[k : k + rows.size])
        k += rows.size
    return Solution("optimal", float(lp.cost @ x), x, duals, elapsed, lp, "clarabel: Solved")


def _solve_auto(lp: LinearProgram, spec: SolverSpec) -> Solution:
    if lp.n_cols <= AUTO_COLUMN_LIMIT:
        return _solve_highs(lp, spec)
    sol = _solve_clarabel(lp, spec)
    if sol.status == "error":
        fallback = _solve_highs(lp, SolverSpec(algorithm="ipm", time_limit=spec.time_limit))
        return replace(fallback, solve_time=fallback.solve_time + sol.solve_time)
    return sol


def parse_highs_solution(path: str | Path) -> dict:
    """Read a HiGHS raw solution file (``--write_solution_style 0``).

    Returns a dict with ``status``, ``objective``, ``columns`` and ``rows``
    (name -> value) and ``col_duals``/``row_duals`` when present.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    out: dict = {"status": None, "objective": None, "columns": {}, "rows": {}}
    k = 0

    def block(k):
        n = int(lines[k].split()[-1])
        vals = {}
        for line in lines[k + 1 : k + 1 + n]:
            name, val = line.rsplit(None, 1)
            vals[name] = float(val)
        return vals, k + 1 + n

    part = None
    while k < len(lines):
        line = lines[k].strip()
        if line == "Model status":
            out["status"] = lines[k + 1].strip()
            k += 2
            continue
        if line.startswith("# Primal solution values"):
            part = "primal"
        elif line.startswith("# Dual solution values"):
            part = "dual"
        elif line.startswith("# Basis"):
            part = None
        elif line.startswith("Objective") and part == "primal":
            out["objective"] = float(line.split()[-1])
        elif line.startswith("# Columns") and part:
            vals, k = block(k)
            out["columns" if part == "primal" else "col_duals"] = vals
            continue
        elif line.startswith("# Rows") and part:
            vals, k = block(k)
            out["rows" if part == "primal" else "row_duals"] = vals
            continue
        k += 1
    if out["status"] is None:
        raise ParseError(f"{path}: no model status found")
    return out


def _solve_external(lp: LinearProgram, spec: SolverSpec) -> Solution:
    if lp.infeasible_rows:
        return _infeasible_stub(lp)
    solver = os.environ.get(SOLVER_ENV, spec.solver)
    if shutil.which(shlex.split(solver)[0]) is None:
        raise SolverNotFound(f"solver executable {solver!r} not found (set {SOLVER_ENV})")
    if spec.result_format != "highs":
        raise SolverFailure(f"unsupported result format {spec.result_format!r}")
    with tempfile.TemporaryDirectory(prefix="storax-") as tmp:
        suffix = ".mps" if spec.model_format == "mps" else ".lp"
        model = Path(tmp) / f"model{suffix}"
        solution = Path(tmp) / "solution.sol"
        emit_lp(lp, model, spec.model_format)
        cmd = spec.command.format(solver=solver, model=model, solution=solution)
        t0 = time.perf_counter()
        proc = subprocess.run(shlex.split(cmd), capture_output=True, text=True, timeout=spec.time_limit)
        elapsed = time.perf_counter() - t0
        if proc.returncode != 0 and not solution.exists():
            raise SolverFailure(f"solver exited with {proc.returncode}: {proc.stderr.strip()[-500:]}")
        if not solution.exists():
            raise SolverFailure("solver produced no solution file")
        parsed = parse_highs_solution(solution)
    status = _status_name(parsed["status"])
    if status != "optimal":
        return Solution(status, float("nan"), np.full(lp.n_cols, np.nan), None, elapsed, lp, parsed["status"])
    duals = None
    if spec.model_format == "mps":
        x = np.array([parsed["columns"][f"C{k + 1:07d}"] for k in range(lp.n_cols)])
        if "row_duals" in parsed:
            order = sorted(range(lp.n_rows), key=lambda k: lp.row_names[k])
            duals = np.empty(lp.n_rows)
            for pos, k in enumerate(order):
                duals[k] = parsed["row_duals"][f"R{pos + 1:07d}"]
    else:
        x = np.array([parsed["columns"][n] for n in lp.col_names])
        if "row_duals" in parsed:
            duals = np.array([parsed["row_duals"][n] for n in lp.row_names])
    obj = parsed["objective"] if parsed["objective"] is not None else float(lp.cost @ x)
    return Solution(status, float(obj), x, duals, elapsed, lp, parsed["status"])


def solve(lp: LinearProgram, backend: SolverSpec | dict | None = None) -> Solution:
    """Solve ``lp`` with the given backend (embedded HiGHS by default)."""
    spec = backend if isinstance(backend, SolverSpec) else SolverSpec.from_dict(backend)
    if lp.infeasible_rows:
        return _infeasible_stub(lp)
    if spec.kind in ("highs", "clarabel", "auto"):
        for module in ("highspy", "clarabel") if spec.kind == "auto" else (spec.kind.replace("highs", "highspy"),):
            try:
                __import__(module)
            except ImportError as exc:
                raise SolverNotFound(f"{module} is not installed") from exc
        backend_fn = {"highs": _solve_highs, "clarabel": _solve_clarabel, "auto": _solve_auto}[spec.kind]
        return backend_fn(lp, spec)
    if spec.kind == "external":
        return _solve_external(lp, spec)
    raise SolverNotFound(f"unknown solver kind {spec.kind!r}")


def python_highs_spec(model_format: str = "lp_file") -> SolverSpec:
    """External backend that runs the bundled highspy file solver in a subprocess."""
    return SolverSpec(
        kind="external",
        solver=sys.executable,
        command="{solver} -m storax.highs_runner {model} {solution}",
        model_format=model_format,
    )
