"""Axisymmetric scalar-potential Laplace solver on linear triangles.

Weak form of div(r grad psi) = 0. Because the gradient of a linear element
is constant and r is linear, the one-point centroid rule integrates the
r-weighted stiffness exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sl
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh, MeshError, Tag

MU0 = 4e-7 * np.pi


class SolverError(Exception):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class BoundaryConditions:
    psi_pole: float = 1.0
    psi_symmetry: float = 0.0

    def __post_init__(self):
        if self.psi_pole == self.psi_symmetry:
            raise ValueError("pole and symmetry potentials must differ")

    def dirichlet_values(self, mesh: Mesh) -> np.ndarray:
        values = np.zeros(mesh.topology.n_nodes)
        values[mesh.tags == Tag.POLE] = self.psi_pole
        values[mesh.tags == Tag.SYMMETRY] = self.psi_symmetry
        return values


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Full-size symmetric system; Dirichlet rows and columns are replaced
    by the identity with the prescribed value on the right-hand side."""

    matrix: sp.csc_matrix
    rhs: np.ndarray
    mesh: Mesh
    fixed: np.ndarray


@dataclass(frozen=True, eq=False)
class FieldSolution:
    psi: np.ndarray
    mesh: Mesh
    residual_norm: float

    def element_bz(self) -> np.ndarray:
        """-mu0 * dpsi/dz, constant on each element."""
        p = self.mesh.nodes[self.mesh.elements]
        psi = self.psi[self.mesh.elements]
        r, z = p[..., 0], p[..., 1]
        det = (r[:, 1] - r[:, 0]) * (z[:, 2] - z[:, 0]) - (r[:, 2] - r[:, 0]) * (z[:, 1] - z[:, 0])
        c = np.stack([r[:, 2] - r[:, 1], r[:, 0] - r[:, 2], r[:, 1] - r[:, 0]], axis=1)
        dpsi_dz = np.einsum("ij,ij->i", c, psi) / det
        return -MU0 * dpsi_dz

    def dumps(self) -> str:
        return "".join(f"{r:.9g} {z:.9g} {v:.12g}\n" for (r, z), v in zip(self.mesh.nodes, self.psi))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())


def element_stiffness(mesh: Mesh) -> np.ndarray:
    """Local matrices r_c * A * (grad N_i . grad N_j), shape (n_elements, 3, 3)."""
    p = mesh.nodes[mesh.elements]
    r, z = p[..., 0], p[..., 1]
    b = np.stack([z[:, 1] - z[:, 2], z[:, 2] - z[:, 0], z[:, 0] - z[:, 1]], axis=1)
    c = np.stack([r[:, 2] - r[:, 1], r[:, 0] - r[:, 2], r[:, 1] - r[:, 0]], axis=1)
    area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    bad = np.flatnonzero(area <= 0.0)
    if bad.size:
        raise MeshError(f"cannot assemble: element {bad[0]} has non-positive area", int(bad[0]))
    rc = r.mean(axis=1)
    scale = rc / (4.0 * area)
    return scale[:, None, None] * (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :])


def assemble_system(mesh: Mesh, fixed: np.ndarray, values: np.ndarray) -> LinearSystem:
    """Assemble with Dirichlet data ``values`` on nodes where ``fixed`` is true."""
    topo = mesh.topology
    fixed = np.asarray(fixed, dtype=bool)
    values = np.where(fixed, np.asarray(values, dtype=float), 0.0)
    ke = element_stiffness(mesh)

    e = topo.elements
    row = np.repeat(e, 3, axis=1).reshape(-1, 3, 3)
    col = np.tile(e, (1, 3)).reshape(-1, 3, 3)
    free_row = ~fixed[row]
    free_col = ~fixed[col]

    # move known columns to the right-hand side, then drop them
    lift = np.where(free_row & ~free_col, ke * values[col], 0.0)
    rhs = -np.bincount(row.ravel(), weights=lift.ravel(), minlength=topo.n_nodes)
    rhs[fixed] = values[fixed]

    indptr, indices, scatter = topo.pattern
    kept = np.where(free_row & free_col, ke, 0.0)
    data = np.bincount(scatter, weights=kept.ravel(), minlength=len(indices))
    data[topo.diagonal[fixed]] = 1.0
    matrix = sp.csc_matrix((data, indices, indptr), shape=(topo.n_nodes, topo.n_nodes))
    return LinearSystem(matrix, rhs, mesh, fixed)


def assemble(mesh: Mesh, bc: BoundaryConditions) -> LinearSystem:
    return assemble_system(mesh, mesh.topology.dirichlet, bc.dirichlet_values(mesh))


def _solve_banded(system: LinearSystem) -> np.ndarray:
    topo = system.mesh.topology
    order, bw, entries, slots = topo.band_layout
    ab = np.zeros((bw + 1) * topo.n_nodes)
    ab[slots] = system.matrix.data[entries]
    b = np.empty_like(system.rhs)
    b[order] = system.rhs
    try:
        x = sl.solveh_banded(ab.reshape(bw + 1, topo.n_nodes), b, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"banded Cholesky failed: {exc}", float("inf")) from exc
    return x[order]


def solve(
    system: LinearSystem, tol: float = 1e-10, method: str = "banded", maxiter: int = 10000
) -> FieldSolution:
    """Solve to relative residual ``tol``.

    ``banded`` (default) is a Cholesky factorization in column-by-column node
    order; ``direct`` uses SuperLU; ``cg`` is Jacobi-preconditioned conjugate
    gradients capped at ``maxiter`` iterations.
    """
    A, b = system.matrix, system.rhs
    b_norm = float(np.linalg.norm(b))
    if method == "banded":
        x = _solve_banded(system)
    elif method == "direct":
        x = spla.splu(A, permc_spec="COLAMD").solve(b)
    elif method == "cg":
        # Jacobi preconditioner; the fixed rows are identity already
        d = A.diagonal()
        M = sp.diags(1.0 / d)
        x, _ = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=maxiter, M=M)
    else:
        raise ValueError(f"unknown method {method!r}")
    res = float(np.linalg.norm(A @ x - b))
    rel = res / b_norm if b_norm > 0 else res
    if not np.isfinite(rel) or rel > tol:
        raise SolverError(f"relative residual {rel:.3e} exceeds tolerance {tol:.1e}", rel)
    return FieldSolution(x, system.mesh, rel)


def sample_bz(sol: FieldSolution, points) -> np.ndarray:
    elems = sol.mesh.locate(points)
    return sol.element_bz()[elems]
