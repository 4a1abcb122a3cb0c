"""Field homogeneity cost of a pole shape.

params -> face profile -> deformed mesh -> scalar potential -> |Bz| samples
in the target cylinder -> (B_max - B_min) / (B_max + B_min).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .mesh import Deformer, MeshConfig, MeshError, PointLocationError, build_base_mesh
from .param_space import ParamSpace, PoleProfile, ShapeParams, to_profile
from .solver import BoundaryConditions, FieldSolution, SolverError, assemble, solve


class EvaluationError(Exception):
    """A candidate could not be evaluated; the search ranks it as infinitely bad."""


class CostDomainError(EvaluationError):
    """B_max + B_min <= 0, so the homogeneity ratio is undefined."""


@dataclass(frozen=True)
class TargetRegion:
    """Upper half of the homogeneity cylinder (the midplane mirrors the rest).

    Samples sit at element centroids: each (r, z) station of an nr x nz grid
    over [0, radius] x [0, half_height] is mapped to the lower triangle of the
    cell whose lower-left corner it is, with stations on the outer edges
    taking the cell just inside. At the coarsest spacing a few edge stations
    share a cell.
    """

    radius: float = 0.08
    half_height: float = 0.04
    nr: int = 9
    nz: int = 5

    def __post_init__(self):
        if self.nr < 2 or self.nz < 2:
            raise ValueError("sample grid needs at least 2 x 2 stations")
        if self.radius <= 0 or self.half_height <= 0:
            raise ValueError("region extents must be positive")

    def stations(self) -> np.ndarray:
        r = np.linspace(0.0, self.radius, self.nr)
        z = np.linspace(0.0, self.half_height, self.nz)
        rr, zz = np.meshgrid(r, z, indexing="ij")
        return np.column_stack([rr.ravel(), zz.ravel()])

    def sample_points(self, spacing: float) -> np.ndarray:
        st = self.stations()
        r_cell = np.round(st[:, 0] / spacing)
        z_cell = np.round(st[:, 1] / spacing)
        r_last = np.round(self.radius / spacing) - 1
        z_last = np.round(self.half_height / spacing) - 1
        r0 = np.minimum(r_cell, r_last) * spacing
        z0 = np.minimum(z_cell, z_last) * spacing
        return np.column_stack([r0 + 2.0 * spacing / 3.0, z0 + spacing / 3.0])


@dataclass(frozen=True)
class CostValue:
    cost: float
    b_max: float
    b_min: float


def homogeneity_cost(bz: Iterable[float]) -> CostValue:
    b = np.abs(np.asarray(list(bz), dtype=float))
    b_max, b_min = float(b.max()), float(b.min())
    denom = b_max + b_min
    if not denom > 0.0:
        raise CostDomainError(f"B_max + B_min = {denom!r} is not positive")
    return CostValue((b_max - b_min) / denom, b_max, b_min)


class EvalCache:
    """Thread-safe memo of costs keyed by lattice point."""

    def __init__(self):
        self._store: dict[ShapeParams, CostValue] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key: ShapeParams) -> CostValue | None:
        with self._lock:
            value = self._store.get(key)
            if value is None:
                self.misses += 1
            else:
                self.hits += 1
            return value

    def put(self, key: ShapeParams, value: CostValue) -> None:
        with self._lock:
            self._store[key] = value

    def __len__(self) -> int:
        return len(self._store)

    def __getstate__(self):
        return {"_store": dict(self._store), "hits": self.hits, "misses": self.misses}

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()


@dataclass
class PoleObjective:
    """Callable cost for one parameter space; the base mesh is built once."""

    space: ParamSpace
    mesh_cfg: MeshConfig = field(default_factory=MeshConfig)
    region: TargetRegion = field(default_factory=TargetRegion)
    bc: BoundaryConditions = field(default_factory=BoundaryConditions)
    use_cache: bool = True
    tol: float = 1e-10
    method: str = "banded"

    def __post_init__(self):
        cfg = self.mesh_cfg
        if self.region.half_height >= cfg.face_datum - cfg.stretch_below:
            raise ValueError("target region reaches into the deforming band")
        if self.region.radius >= cfg.r_max:
            raise ValueError("target region exceeds the domain")
        self.base_mesh = build_base_mesh(cfg)
        self.deformer = Deformer(cfg, self.base_mesh)
        self.points = self.region.sample_points(cfg.spacing)
        # the region lies below the band, so its elements never move
        self.sample_elements = self.base_mesh.locate(self.points)
        self.cache = EvalCache()

    def profile(self, params: ShapeParams) -> PoleProfile:
        return to_profile(self.space, params)

    def field(self, params: ShapeParams) -> FieldSolution:
        return self.field_for_profile(self.profile(params))

    def field_for_profile(self, profile: PoleProfile) -> FieldSolution:
        try:
            mesh = self.deformer(profile)
            return solve(assemble(mesh, self.bc), tol=self.tol, method=self.method)
        except (MeshError, SolverError, PointLocationError) as exc:
            raise EvaluationError(str(exc)) from exc

    def evaluate_profile(self, profile: PoleProfile) -> CostValue:
        sol = self.field_for_profile(profile)
        return homogeneity_cost(sol.element_bz()[self.sample_elements])

    def evaluate(self, params: ShapeParams) -> CostValue:
        if not self.space.is_valid(params):
            raise ValueError(f"{params.index} is not a valid point of {self.space.scheme}")
        if self.use_cache:
            hit = self.cache.get(params)
            if hit is not None:
                return hit
        value = self.evaluate_profile(self.profile(params))
        if self.use_cache:
            self.cache.put(params, value)
        return value

    def __call__(self, params: ShapeParams) -> float:
        return self.evaluate(params).cost


def evaluate(
    space: ParamSpace,
    params: ShapeParams,
    cfg: MeshConfig | None = None,
    region: TargetRegion | None = None,
    bc: BoundaryConditions | None = None,
) -> CostValue:
    """One-shot evaluation; builds a fresh objective."""
    obj = PoleObjective(
        space,
        cfg or MeshConfig(),
        region or TargetRegion(),
        bc or BoundaryConditions(),
        use_cache=False,
    )
    return obj.evaluate(params)


def cost_scale_invariance_check(
    space: ParamSpace,
    params: ShapeParams,
    psi_values: Sequence[float],
    cfg: MeshConfig | None = None,
    region: TargetRegion | None = None,
    tol: float = 1e-12,
) -> bool:
    """True iff the cost is the same for every pole potential in ``psi_values``."""
    if len(psi_values) < 2:
        raise ValueError("need at least two pole potentials")
    if any(psi == 0 for psi in psi_values):
        raise CostDomainError("zero pole potential gives no field")
    costs = [
        evaluate(space, params, cfg, region, BoundaryConditions(psi_pole=float(psi))).cost
        for psi in psi_values
    ]
    return max(costs) - min(costs) <= tol
