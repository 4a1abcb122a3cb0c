import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poletabu.mesh import MeshConfig, MeshError, build_base_mesh, deform, structured_mesh
from poletabu.param_space import PoleProfile
from poletabu.solver import (
    MU0,
    BoundaryConditions,
    SolverError,
    assemble,
    assemble_system,
    element_stiffness,
    sample_bz,
    solve,
)


def box_boundary(mesh):
    r, z = mesh.nodes.T
    r_max, z_max = r.max(), z.max()
    return np.isclose(z, 0) | np.isclose(z, z_max) | np.isclose(r, r_max)


@pytest.fixture(scope="module")
def base2():
    return build_base_mesh(MeshConfig(refine=2))


class TestElementMatrix:
    @pytest.mark.parametrize("r0", [0.0, 0.05, 0.37])
    def test_lower_triangle_hand_value(self, r0):
        h = 0.01
        m = structured_mesh(0.4, 0.01, h)
        i = int(round(r0 / h))
        ke = element_stiffness(m)[2 * i]
        r_bar = r0 + 2 * h / 3
        expected = r_bar / 2 * np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]])
        assert np.allclose(ke, expected, rtol=1e-12, atol=1e-18)

    def test_rows_sum_to_zero(self, base2):
        ke = element_stiffness(base2)
        assert np.abs(ke.sum(axis=2)).max() < 1e-15

    def test_degenerate_element(self):
        m = structured_mesh(0.02, 0.02, 0.01)
        m.nodes[4] = m.nodes[0]
        with pytest.raises(MeshError):
            element_stiffness(m)


class TestAssembly:
    def test_symmetric_nonnegative_diagonal(self, base2):
        A = assemble(base2, BoundaryConditions()).matrix
        assert abs(A - A.T).max() < 1e-15
        assert (A.diagonal() >= 0).all()

    def test_all_dirichlet_is_identity(self):
        m = structured_mesh(0.03, 0.03, 0.01)
        vals = np.arange(16, dtype=float)
        sys_ = assemble_system(m, np.ones(16, dtype=bool), vals)
        assert np.array_equal(sys_.matrix.toarray(), np.eye(16))
        assert np.array_equal(solve(sys_).psi, vals)

    def test_zero_pole_potential_gives_zero_field(self, base2):
        fixed = base2.topology.dirichlet
        sol = solve(assemble_system(base2, fixed, np.zeros(base2.topology.n_nodes)))
        assert np.array_equal(sol.psi, np.zeros_like(sol.psi))

    def test_equal_potentials_rejected(self):
        with pytest.raises(ValueError):
            BoundaryConditions(psi_pole=0.0, psi_symmetry=0.0)

    def test_bitwise_deterministic(self, base2):
        a = solve(assemble(base2, BoundaryConditions())).psi
        b = solve(assemble(base2, BoundaryConditions())).psi
        assert a.tobytes() == b.tobytes()


class TestManufactured:
    @pytest.mark.parametrize("method", ["banded", "direct", "cg"])
    def test_linear_in_z_is_exact(self, method):
        # psi = 2 + 3 z solves div(r grad psi) = 0; sides are natural
        m = structured_mesh(0.1, 0.05, 0.005)
        z = m.nodes[:, 1]
        fixed = np.isclose(z, 0) | np.isclose(z, 0.05)
        exact = 2 + 3 * z
        sol = solve(assemble_system(m, fixed, exact), tol=1e-14, method=method)
        assert np.abs(sol.psi - exact).max() < 1e-9
        bz = sol.element_bz()
        assert np.abs(bz / (-3 * MU0) - 1).max() < 1e-9

    def test_cubic_dirichlet_box(self):
        m = structured_mesh(1.0, 1.0, 0.05)
        r, z = m.nodes.T
        exact = z**3 - 1.5 * r**2 * z
        fixed = box_boundary(m)
        sol = solve(assemble_system(m, fixed, exact))
        # nodal error of a P1 solution, small but not exact
        assert 0 < np.abs(sol.psi - exact).max() < 5e-3

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
    def test_linearity(self, a1, b1, a2, b2):
        m = structured_mesh(0.05, 0.05, 0.01)
        fixed = box_boundary(m)
        r, z = m.nodes.T
        g1 = a1 + b1 * np.sin(7 * r + z)
        g2 = a2 + b2 * r * z
        s1 = solve(assemble_system(m, fixed, g1)).psi
        s2 = solve(assemble_system(m, fixed, g2)).psi
        s12 = solve(assemble_system(m, fixed, 2 * g1 - 3 * g2)).psi
        scale = 1 + np.abs(g1).max() + np.abs(g2).max()
        assert np.abs(s12 - (2 * s1 - 3 * s2)).max() < 1e-9 * scale

    def test_constant_field_has_no_flux(self):
        m = structured_mesh(0.05, 0.05, 0.01)
        sol = solve(assemble_system(m, box_boundary(m), np.full(36, 4.2)))
        assert np.abs(sol.psi - 4.2).max() < 1e-12
        assert np.abs(sol.element_bz()).max() < 1e-18


class TestPoleProblem:
    def test_parallel_gap(self):
        # 60 mm gap over a wide pole behaves like a parallel-plate gap
        cfg = MeshConfig(face_datum=0.06, stretch_below=0.01, refine=4)
        sol = solve(assemble(build_base_mesh(cfg), BoundaryConditions()))
        bz = sample_bz(sol, [[0.0033, 0.0017], [0.0333, 0.03]])
        assert np.abs(np.abs(bz) / (MU0 / 0.06) - 1).max() < 0.05
        assert bz[0] == pytest.approx(-2.0932951439940104e-05, rel=1e-9)

    def test_bounded_by_boundary_values(self, base2):
        sol = solve(assemble(base2, BoundaryConditions(psi_pole=3.0, psi_symmetry=-1.0)))
        assert sol.psi.min() >= -1.0 - 1e-12
        assert sol.psi.max() <= 3.0 + 1e-12

    def test_methods_agree(self, base2):
        system = assemble(base2, BoundaryConditions())
        ref = solve(system, method="direct").psi
        assert np.abs(solve(system, method="banded").psi - ref).max() < 1e-10
        assert np.abs(solve(system, tol=1e-12, method="cg").psi - ref).max() < 1e-8

    def test_cg_iteration_cap_raises(self, base2):
        with pytest.raises(SolverError) as info:
            solve(assemble(base2, BoundaryConditions()), method="cg", maxiter=1)
        assert info.value.residual > 1e-10

    def test_unknown_method(self, base2):
        with pytest.raises(ValueError):
            solve(assemble(base2, BoundaryConditions()), method="gmres")

    def test_refinement_change_small(self):
        # B_max - B_min over a few target points changes < 10 % from refine 2 to 4
        pts = [[0.0033, 0.0017], [0.07, 0.0017], [0.0033, 0.035], [0.07, 0.035]]
        spread = []
        for refine in (2, 4):
            cfg = MeshConfig(refine=refine)
            b = np.abs(sample_bz(solve(assemble(build_base_mesh(cfg), BoundaryConditions())), pts))
            spread.append(b.max() - b.min())
        assert abs(spread[1] - spread[0]) / spread[1] < 0.1

    def test_deformed_solve(self):
        cfg = MeshConfig()
        base = build_base_mesh(cfg)
        flat = solve(assemble(base, BoundaryConditions()))
        raised = solve(assemble(deform(base, cfg, PoleProfile((0.02,) * 17)), BoundaryConditions()))
        pt = [[0.0033, 0.0017]]
        # a wider gap weakens the centre field
        assert abs(sample_bz(raised, pt)[0]) < abs(sample_bz(flat, pt)[0])

    def test_dump(self, base2, tmp_path):
        sol = solve(assemble(base2, BoundaryConditions()))
        sol.dump(tmp_path / "psi.txt")
        lines = (tmp_path / "psi.txt").read_text().splitlines()
        assert len(lines) == base2.topology.n_nodes
        assert len(lines[0].split()) == 3
