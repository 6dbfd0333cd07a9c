"""Linear capacity-expansion model assembled around a pluggable storage formulation.

Every conversion, storage and transport technology gets a capacity variable
with an annualized investment cost. Operation is modeled on the representative
steps of an :class:`~storax.aggregation.Aggregation`; operating costs are
weighted by the number of hours each step represents.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from storax.aggregation import Aggregation
from storax.errors import InconsistentInstance, MissingDuals
from storax.formulations import METHODS, StorageTech, build_formulation
from storax.lp import INF, LinearProgram, LPBuilder, emit_lp
from storax.solvers import Solution, SolverSpec, solve

__all__ = [
    "ConversionTech",
    "TransportLink",
    "ModelInstance",
    "build_model",
    "emit_lp",
    "solve",
    "shadow_prices",
    "capacities",
    "Solution",
    "SolverSpec",
]

_NAME = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class ConversionTech:
    """Generator at one or more nodes.

    ``cf`` names the capacity-factor attribute (column ``cf@node``); ``None``
    means the unit is fully dispatchable. ``nodes=None`` installs it everywhere.
    """

    name: str
    capex: float
    var_cost: float = 0.0
    cf: str | None = None
    max_capacity: float | None = None
    nodes: tuple | None = None


@dataclass(frozen=True)
class TransportLink:
    """Bidirectional line with one symmetric capacity and loss on the receiving end."""

    name: str
    node_from: str
    node_to: str
    capex: float
    loss: float = 0.0


@dataclass(frozen=True)
class ModelInstance:
    """Everything needed to build one LP.

    ``demand`` maps each node to its demand attribute (column ``attr@node``).
    """

    nodes: tuple
    conversion: tuple
    storage: tuple
    links: tuple
    demand: dict
    aggregation: Aggregation = field(repr=False)
    storage_method: str = "Proposed"

    def __post_init__(self):
        for name in ("nodes", "conversion", "storage", "links"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def with_aggregation(self, aggregation: Aggregation, storage_method: str | None = None) -> "ModelInstance":
        return replace(
            self,
            aggregation=aggregation,
            storage_method=self.storage_method if storage_method is None else storage_method,
        )

    def conversion_nodes(self, tech: ConversionTech) -> tuple:
        return self.nodes if tech.nodes is None else tuple(tech.nodes)

    def validate(self) -> None:
        agg = self.aggregation
        if agg is None:
            raise InconsistentInstance("instance has no aggregation")
        if self.storage_method not in METHODS:
            raise InconsistentInstance(f"unknown storage method {self.storage_method!r}")
        names = [*self.nodes, *(t.name for t in self.conversion), *(t.name for t in self.storage)]
        names += [link.name for link in self.links]
        for name in names:
            if not _NAME.match(str(name)):
                raise InconsistentInstance(f"{name!r} is not a valid identifier")
        for group in (self.nodes, [t.name for t in self.conversion], [t.name for t in self.storage]):
            if len(set(group)) != len(group):
                raise InconsistentInstance("duplicate names")
        if len({link.name for link in self.links}) != len(self.links):
            raise InconsistentInstance("duplicate link names")
        for node, attr in self.demand.items():
            if node not in self.nodes:
                raise InconsistentInstance(f"demand given for unknown node {node!r}")
            if f"{attr}@{node}" not in agg.rep_values:
                raise InconsistentInstance(f"missing attribute {attr}@{node}")
        for t in self.conversion:
            if t.capex < 0 or t.var_cost < 0:
                raise InconsistentInstance(f"{t.name}: costs must be >= 0")
            if t.max_capacity is not None and t.max_capacity < 0:
                raise InconsistentInstance(f"{t.name}: max capacity must be >= 0")
            for node in self.conversion_nodes(t):
                if node not in self.nodes:
                    raise InconsistentInstance(f"{t.name}: unknown node {node!r}")
                if t.cf is not None and f"{t.cf}@{node}" not in agg.rep_values:
                    raise InconsistentInstance(f"missing attribute {t.cf}@{node}")
        for s in self.storage:
            if s.cost_energy < 0 or s.cost_power < 0:
                raise InconsistentInstance(f"{s.name}: costs must be >= 0")
        for link in self.links:
            if link.capex < 0:
                raise InconsistentInstance(f"{link.name}: capex must be >= 0")
            if not 0.0 <= link.loss < 1.0:
                raise InconsistentInstance(f"{link.name}: loss must lie in [0, 1)")
            if link.node_from not in self.nodes or link.node_to not in self.nodes:
                raise InconsistentInstance(f"{link.name}: unknown endpoint")
            if link.node_from == link.node_to:
                raise InconsistentInstance(f"{link.name}: endpoints must differ")

    def to_dict(self) -> dict:
        """Serializable description without the aggregation."""
        return {
            "nodes": list(self.nodes),
            "conversion": [
                {**asdict(t), "nodes": None if t.nodes is None else list(t.nodes)} for t in self.conversion
            ],
            "storage": [asdict(s) for s in self.storage],
            "links": [asdict(link) for link in self.links],
            "demand": dict(self.demand),
            "storage_method": self.storage_method,
        }

    @classmethod
    def from_dict(cls, data: dict, aggregation: Aggregation | None = None) -> "ModelInstance":
        try:
            return cls(
                nodes=tuple(data["nodes"]),
                conversion=tuple(
                    ConversionTech(**{**t, "nodes": None if t.get("nodes") is None else tuple(t["nodes"])})
                    for t in data["conversion"]
                ),
                storage=tuple(StorageTech(**s) for s in data["storage"]),
                links=tuple(TransportLink(**link) for link in data.get("links", [])),
                demand=dict(data["demand"]),
                aggregation=aggregation,
                storage_method=data.get("storage_method", "Proposed"),
            )
        except (KeyError, TypeError) as exc:
            raise InconsistentInstance(f"malformed instance description: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, aggregation: Aggregation | None = None) -> "ModelInstance":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")), aggregation)


def build_model(instance: ModelInstance) -> LinearProgram:
    """Assemble the LP of ``instance``.

    Column groups: ``("cap", g, n)``, ``("gen", g, n)``, ``("energy_cap", s, n)``,
    ``("power_cap", s, n)``, ``("charge", s, n)``, ``("discharge", s, n)``,
    ``("storage", s, n)`` (own level variables), ``("tcap", l)``,
    ``("flow", l, "fwd"|"bwd")``. Row groups: ``("balance", n)`` and the storage
    block ``("storage", s, n)``.
    """
    instance.validate()
    agg = instance.aggregation
    I = agg.n_steps
    w = agg.weights.astype(float)
    steps = list(range(1, I + 1))
    b = LPBuilder()
    # per node: list of (cols, coefs) for balance terms, each of length I
    terms: dict = {n: [] for n in instance.nodes}

    for t in instance.conversion:
        for n in instance.conversion_nodes(t):
            ub = INF if t.max_capacity is None else t.max_capacity
            cap = b.add_vars(("cap", t.name, n), "cap", [(t.name, n)], 0.0, ub, t.capex)[0]
            gen = b.add_vars(("gen", t.name, n), "gen", [(t.name, n, i) for i in steps], 0.0, INF, w * t.var_cost)
            terms[n].append((gen, 1.0))
            cf = np.ones(I) if t.cf is None else agg.rep_values[f"{t.cf}@{n}"]
            b.add_rows(
                ("gen_limit", t.name, n),
                "gen_limit",
                [(t.name, n, i) for i in steps],
                [gen, cap],
                [1.0, -cf],
                -INF,
                0.0,
            )

    storage_meta = {}
    for s in instance.storage:
        form = build_formulation(instance.storage_method, agg, s)
        for n in instance.nodes:
            e = b.add_vars(("energy_cap", s.name, n), "energy_cap", [(s.name, n)], 0.0, INF, s.cost_energy)[0]
            c = b.add_vars(("power_cap", s.name, n), "power_cap", [(s.name, n)], 0.0, INF, s.cost_power)[0]
            ch = b.add_vars(("charge", s.name, n), "charge", [(s.name, n, i) for i in steps])
            dis = b.add_vars(("discharge", s.name, n), "discharge", [(s.name, n, i) for i in steps])
            own = []
            for bname, labels, lb, ub in form.var_blocks:
                own.append(b.add_vars(None, f"{bname}_{s.name}", [(n, *lab) for lab in labels], lb, ub))
            own = np.concatenate(own)
            b.col_groups[("storage", s.name, n)] = own
            terms[n].append((dis, 1.0))
            terms[n].append((ch, -1.0))
            b.add_rows(
                ("power_limit", s.name, n),
                "power_limit",
                [(s.name, n, i) for i in steps],
                [ch, dis, c],
                [1.0, 1.0, -1.0],
                -INF,
                0.0,
            )
            col_map = np.concatenate([own, [e], ch, dis])
            keys = [(n, *label[1:]) for label in form.row_labels]
            # prefix per row block keeps names readable: coupling_battery(n1,5)
            rows_idx = []
            blocks = [label[0] for label in form.row_labels]
            start = 0
            while start < len(blocks):
                stop = start
                while stop < len(blocks) and blocks[stop] == blocks[start]:
                    stop += 1
                rows_idx.append(
                    b.add_matrix_rows(
                        None,
                        f"{blocks[start]}_{s.name}",
                        keys[start:stop],
                        form.matrix[start:stop],
                        col_map,
                        form.lo[start:stop],
                        form.hi[start:stop],
                    )
                )
                start = stop
            b.row_groups[("storage", s.name, n)] = np.concatenate(rows_idx)
            storage_meta[(s.name, n)] = {"form": form, "col_map": col_map}

    for link in instance.links:
        tcap = b.add_vars(("tcap", link.name), "tcap", [link.name], 0.0, INF, link.capex)[0]
        for direction, src, dst in (("fwd", link.node_from, link.node_to), ("bwd", link.node_to, link.node_from)):
            flow = b.add_vars(("flow", link.name, direction), "flow", [(link.name, direction, i) for i in steps])
            terms[src].append((flow, -1.0))
            terms[dst].append((flow, 1.0 - link.loss))
            b.add_rows(
                ("flow_limit", link.name, direction),
                "flow_limit",
                [(link.name, direction, i) for i in steps],
                [flow, tcap],
                [1.0, -1.0],
                -INF,
                0.0,
            )

    for n in instance.nodes:
        attr = instance.demand.get(n)
        demand = np.zeros(I) if attr is None else agg.rep_values[f"{attr}@{n}"]
        b.add_rows(
            ("balance", n),
            "balance",
            [(n, i) for i in steps],
            [cols for cols, _ in terms[n]],
            [coef for _, coef in terms[n]],
            demand,
            demand,
        )

    lp = b.build()
    lp.meta = {
        "storage_method": instance.storage_method,
        "aggregation": agg,
        "storage": storage_meta,
        "nodes": instance.nodes,
    }
    lp.check()
    return lp


def shadow_prices(solution: Solution, node: str) -> np.ndarray:
    """Per-hour price of every representative step at ``node``: balance dual / w_i."""
    if solution.row_dual is None:
        raise MissingDuals("solution carries no duals")
    lp = solution.lp
    agg = lp.meta["aggregation"]
    rows = lp.row_groups[("balance", node)]
    if rows.size != agg.n_steps:
        raise MissingDuals(f"balance rows of {node} were dropped from the model")
    return solution.row_dual[rows] / agg.weights


def capacities(solution: Solution) -> dict:
    """Installed capacities keyed like the column groups, e.g. ``("cap", "solar", "n1")``."""
    lp = solution.lp
    out = {}
    for key, idx in lp.col_groups.items():
        if key[0] in ("cap", "energy_cap", "power_cap", "tcap"):
            out[key] = float(solution.x[idx].sum())
    return out
