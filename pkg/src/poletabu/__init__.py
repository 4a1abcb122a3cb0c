"""Tabu search pole-shape optimization with an axisymmetric FE field model."""

from .mesh import MeshConfig, MeshError, build_base_mesh, deform
from .objective import CostValue, EvaluationError, PoleObjective, TargetRegion, evaluate
from .param_space import (
    ParamSpace,
    PoleProfile,
    ShapeParams,
    make_raw_space,
    make_steps_space,
    quantize,
    to_profile,
)
from .solver import BoundaryConditions, FieldSolution, SolverError, assemble, sample_bz, solve
from .tabu import RunRecord, TabuConfig, run_search

__all__ = [
    "BoundaryConditions",
    "CostValue",
    "EvaluationError",
    "FieldSolution",
    "MeshConfig",
    "MeshError",
    "ParamSpace",
    "PoleObjective",
    "PoleProfile",
    "RunRecord",
    "ShapeParams",
    "SolverError",
    "TabuConfig",
    "TargetRegion",
    "assemble",
    "build_base_mesh",
    "deform",
    "evaluate",
    "make_raw_space",
    "make_steps_space",
    "quantize",
    "run_search",
    "sample_bz",
    "solve",
    "to_profile",
]
