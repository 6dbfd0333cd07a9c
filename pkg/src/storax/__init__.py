"""Storage representations for time-series-aggregated energy system models."""

from storax.aggregation import Aggregation, aggregate
from storax.esom import ConversionTech, ModelInstance, TransportLink, build_model
from storax.formulations import METHODS, StorageTech, build_formulation
from storax.lp import LinearProgram, emit_lp
from storax.solvers import Solution, SolverSpec, solve
from storax.storage_sequence import StorageMap, build_storage_map, count_storage_steps
from storax.timeseries import FullTimeSeries, load_timeseries

__all__ = [
    "Aggregation",
    "ConversionTech",
    "FullTimeSeries",
    "LinearProgram",
    "METHODS",
    "ModelInstance",
    "Solution",
    "SolverSpec",
    "StorageMap",
    "StorageTech",
    "TransportLink",
    "aggregate",
    "build_formulation",
    "build_model",
    "build_storage_map",
    "count_storage_steps",
    "emit_lp",
    "load_timeseries",
    "solve",
]
