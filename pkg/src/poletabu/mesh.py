"""Structured axisymmetric triangle mesh with a movable pole face.

The (r, z) half-plane [0, r_max] x [0, z_max] is covered by a tensor grid
whose cells are split along the lower-left to upper-right diagonal. The
pole occupies r <= pole_radius above the face line. Shape changes move
nodes vertically inside two bands around the face; the topology never
changes, so consecutive evaluations see no remeshing noise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .param_space import HEIGHT_MAX, NODE_RADII, PoleProfile

BASE_SPACING = 0.01
TARGET_TOP = 0.04


class Tag(enum.IntEnum):
    INTERIOR = 0
    SYMMETRY = 1
    POLE = 2
    OPEN = 3


class MeshError(Exception):
    """Raised when a deformed mesh contains a non-positive element."""

    def __init__(self, message: str, element: int | None = None):
        super().__init__(message)
        self.element = element


class PointLocationError(Exception):
    pass


def _on_lattice(x: float, h: float) -> bool:
    return abs(x / h - round(x / h)) < 1e-9


@dataclass(frozen=True)
class MeshConfig:
    r_max: float = 0.4
    z_max: float = 0.3
    pole_radius: float = 0.16
    face_datum: float = 0.1
    stretch_above: float = 0.05
    stretch_below: float = 0.04
    refine: int = 1
    # +1: heights recess the face away from the midplane; -1: toward it
    direction: int = 1

    def __post_init__(self):
        if self.refine < 1:
            raise ValueError("refine must be >= 1")
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        for name in ("r_max", "z_max", "pole_radius", "face_datum", "stretch_above", "stretch_below"):
            v = getattr(self, name)
            if v <= 0 or not _on_lattice(v, BASE_SPACING):
                raise ValueError(f"{name}={v} must be a positive multiple of {BASE_SPACING} m")
        if self.pole_radius >= self.r_max:
            raise ValueError("pole must end inside the domain")
        if self.face_datum + self.stretch_above >= self.z_max:
            raise ValueError("upper stretch band reaches the outer boundary")
        if self.face_datum - self.stretch_below <= TARGET_TOP:
            raise ValueError("lower stretch band must stay clear of the target region")
        squeezed = self.stretch_above if self.direction > 0 else self.stretch_below
        if squeezed <= HEIGHT_MAX:
            raise ValueError(
                "the band the face moves into must be thicker than the 40 mm height range"
            )

    @property
    def spacing(self) -> float:
        return BASE_SPACING / self.refine

    @property
    def grid_shape(self) -> tuple[int, int]:
        h = self.spacing
        return int(round(self.r_max / h)) + 1, int(round(self.z_max / h)) + 1


@dataclass(frozen=True, eq=False)
class Topology:
    """Connectivity and tags shared by every deformed copy of a mesh."""

    nr: int
    nz: int
    spacing: float
    elements: np.ndarray
    tags: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.nr * self.nz

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @cached_property
    def dirichlet(self) -> np.ndarray:
        return (self.tags == Tag.POLE) | (self.tags == Tag.SYMMETRY)

    @cached_property
    def pattern(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """CSC pattern of the stiffness matrix and the scatter map from the
        (n_elements, 3, 3) local entries to the CSC data array."""
        e = self.elements
        rows = np.repeat(e, 3, axis=1).ravel()
        cols = np.tile(e, (1, 3)).ravel()
        key = cols.astype(np.int64) * self.n_nodes + rows
        uniq, scatter = np.unique(key, return_inverse=True)
        col_of = uniq // self.n_nodes
        indices = (uniq % self.n_nodes).astype(np.int32)
        indptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.add.at(indptr, col_of + 1, 1)
        indptr = np.cumsum(indptr)
        return indptr, indices, scatter.ravel()

    @cached_property
    def diagonal(self) -> np.ndarray:
        """Position of each diagonal entry in the CSC data array."""
        indptr, indices, _ = self.pattern
        cols = np.repeat(np.arange(self.n_nodes), np.diff(indptr))
        return np.flatnonzero(cols == indices)

    @cached_property
    def band_layout(self) -> tuple[np.ndarray, int, np.ndarray, np.ndarray]:
        """Column-by-column node numbering, which bounds the half bandwidth
        by nz + 1, and where each upper-triangle CSC entry lands in LAPACK
        upper banded storage."""
        node = np.arange(self.n_nodes)
        order = (node % self.nr) * self.nz + node // self.nr
        indptr, indices, _ = self.pattern
        cols = np.repeat(node, np.diff(indptr))
        pr, pc = order[indices], order[cols]
        upper = pr <= pc
        bw = int((pc - pr).max())
        slots = (bw + pr[upper] - pc[upper]) * self.n_nodes + pc[upper]
        return order, bw, np.flatnonzero(upper), slots

    @cached_property
    def pole_elements(self) -> np.ndarray:
        return np.all(self.tags[self.elements] == Tag.POLE, axis=1)


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray
    topology: Topology

    @property
    def elements(self) -> np.ndarray:
        return self.topology.elements

    @property
    def tags(self) -> np.ndarray:
        return self.topology.tags

    def node_id(self, i: int, j: int) -> int:
        return j * self.topology.nr + i

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.elements]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def check(self) -> None:
        areas = self.signed_areas()
        bad = np.flatnonzero(areas <= 0.0)
        if bad.size:
            raise MeshError(f"element {bad[0]} has non-positive area {areas[bad[0]]:.3e}", int(bad[0]))

    def locate(self, points) -> np.ndarray:
        """Element index containing each (r, z) point.

        Radial columns never move, so the column comes straight from the grid
        index; the row is bracketed with a search on the column's lower edges.
        """
        topo = self.topology
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        h = topo.spacing
        r_max = (topo.nr - 1) * h
        z_max = (topo.nz - 1) * h
        zgrid = self.nodes[:, 1].reshape(topo.nz, topo.nr)
        out = np.empty(len(pts), dtype=np.int64)
        for n, (r, z) in enumerate(pts):
            if not (0.0 <= r <= r_max and 0.0 <= z <= z_max):
                raise PointLocationError(f"point ({r:.6g}, {z:.6g}) lies outside the domain")
            i = min(int(np.floor(r / h)), topo.nr - 2)
            t = r / h - i
            edge = zgrid[:, i] + t * (zgrid[:, i + 1] - zgrid[:, i])
            j0 = int(np.clip(np.searchsorted(edge, z, side="right") - 1, 0, topo.nz - 2))
            found = -1
            for j in (j0, j0 - 1, j0 + 1):
                if not 0 <= j <= topo.nz - 2:
                    continue
                for k in (0, 1):
                    eid = 2 * (j * (topo.nr - 1) + i) + k
                    if _inside(self.nodes[self.elements[eid]], r, z):
                        found = eid
                        break
                if found >= 0:
                    break
            if found < 0:
                raise PointLocationError(f"point ({r:.6g}, {z:.6g}) not found in any element")
            if topo.pole_elements[found]:
                raise PointLocationError(f"point ({r:.6g}, {z:.6g}) lies inside the pole")
            out[n] = found
        return out

    def dumps(self) -> str:
        lines = [f"{self.topology.n_nodes} {self.topology.n_elements}"]
        lines += [f"{r:.9g} {z:.9g} {Tag(t).name}" for (r, z), t in zip(self.nodes, self.tags)]
        lines += [f"{a} {b} {c}" for a, b, c in self.elements]
        return "\n".join(lines) + "\n"

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())


def _inside(tri: np.ndarray, r: float, z: float, tol: float = 1e-12) -> bool:
    (r0, z0), (r1, z1), (r2, z2) = tri
    det = (r1 - r0) * (z2 - z0) - (r2 - r0) * (z1 - z0)
    l1 = ((r - r0) * (z2 - z0) - (r2 - r0) * (z - z0)) / det
    l2 = ((r1 - r0) * (z - z0) - (r - r0) * (z1 - z0)) / det
    return l1 >= -tol and l2 >= -tol and 1.0 - l1 - l2 >= -tol


def structured_mesh(r_extent: float, z_extent: float, spacing: float, tags=None) -> Mesh:
    """Tensor grid on [0, r_extent] x [0, z_extent], two triangles per cell."""
    nr = int(round(r_extent / spacing)) + 1
    nz = int(round(z_extent / spacing)) + 1
    r = np.arange(nr) * spacing
    z = np.arange(nz) * spacing
    rr, zz = np.meshgrid(r, z)
    nodes = np.column_stack([rr.ravel(), zz.ravel()])

    i, j = np.meshgrid(np.arange(nr - 1), np.arange(nz - 1))
    n00 = (j * nr + i).ravel()
    n10 = n00 + 1
    n01 = n00 + nr
    n11 = n01 + 1
    elements = np.empty((2 * n00.size, 3), dtype=np.int64)
    elements[0::2] = np.column_stack([n00, n10, n11])
    elements[1::2] = np.column_stack([n00, n11, n01])

    if tags is None:
        tags = np.full(nr * nz, Tag.INTERIOR, dtype=np.int8)
    return Mesh(nodes, Topology(nr, nz, spacing, elements, np.asarray(tags, dtype=np.int8)))


def build_base_mesh(cfg: MeshConfig) -> Mesh:
    base = structured_mesh(cfg.r_max, cfg.z_max, cfg.spacing)
    topo = base.topology
    h = cfg.spacing
    i_pole = int(round(cfg.pole_radius / h))
    j_face = int(round(cfg.face_datum / h))

    tags = np.full((topo.nz, topo.nr), Tag.INTERIOR, dtype=np.int8)
    tags[-1, :] = Tag.OPEN
    tags[:, -1] = Tag.OPEN
    tags[0, :] = Tag.SYMMETRY
    tags[j_face:, : i_pole + 1] = Tag.POLE
    return Mesh(base.nodes, Topology(topo.nr, topo.nz, h, topo.elements, tags.ravel()))


@dataclass(frozen=True, eq=False)
class Deformer:
    """Precomputed band weights so that deform is one fused array update."""

    cfg: MeshConfig
    base: Mesh
    weights: np.ndarray = field(init=False)
    station_radii: np.ndarray = field(init=False)

    def __post_init__(self):
        cfg = self.cfg
        z = self.base.nodes[:, 1]
        r = self.base.nodes[:, 0]
        lo = cfg.face_datum - cfg.stretch_below
        hi = cfg.face_datum + cfg.stretch_above
        w = np.zeros_like(z)
        below = (z > lo) & (z <= cfg.face_datum)
        above = (z > cfg.face_datum) & (z < hi)
        w[below] = (z[below] - lo) / cfg.stretch_below
        w[above] = (hi - z[above]) / cfg.stretch_above
        w[r > cfg.pole_radius + 1e-12] = 0.0
        object.__setattr__(self, "weights", w)
        nr = self.base.topology.nr
        object.__setattr__(self, "station_radii", self.base.nodes[:nr, 0].copy())

    def __call__(self, profile: PoleProfile, check: bool = True) -> Mesh:
        h = np.interp(self.station_radii, NODE_RADII, profile.heights)
        nz = self.base.topology.nz
        shift = self.cfg.direction * np.tile(h, nz)
        nodes = self.base.nodes.copy()
        nodes[:, 1] += self.weights * shift
        mesh = Mesh(nodes, self.base.topology)
        if check:
            mesh.check()
        return mesh


def deform(mesh: Mesh, cfg: MeshConfig, profile: PoleProfile) -> Mesh:
    """Move the face nodes to ``face_datum + direction * h(r)`` and stretch the bands."""
    return Deformer(cfg, mesh)(profile)
