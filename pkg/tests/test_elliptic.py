import math

import numpy as np
import pytest

from qrc.core import FixedIterations, factorize_system, run_iterated
from qrc.elliptic import (EllipticData, EllipticDofMap, _geometry, assemble_elliptic,
                          assemble_elliptic_forms, assemble_elliptic_load, boundary_traces,
                          edge_angles, gamma_mass_matrix, nodal_csv, recover_robin,
                          sample_gamma_trace, solve_direct_robin, write_vtk)
from qrc.errors import AllGuarded, DimensionMismatch, InvalidSystem, NotPositiveDefinite
from qrc.mesh import GAMMA, GAMMA_C, TriMesh, annulus_mesh, robin_coefficient
from qrc.noise import l2_delta
from qrc.sparse import quad_form


def reference_triangle():
    # gamma on the two legs, gamma_c on the hypotenuse
    return TriMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], [[0, 1], [2, 0], [1, 2]],
                   [GAMMA, GAMMA, GAMMA_C])


def radial(mesh, eta, g, rc=0.5):
    a = g
    b = (a / rc) / eta - a * math.log(rc)
    return a * np.log(np.linalg.norm(mesh.nodes, axis=1)) + b


class TestForms:
    def test_reference_stiffness(self):
        m = reference_triangle()
        _, B = assemble_elliptic_forms(m)
        want = [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]]
        np.testing.assert_allclose(B.todense()[:3, :3], want, atol=1e-15)

    def test_constant_u(self, small_annulus):
        m = small_annulus
        S, _ = assemble_elliptic_forms(m)
        x = np.zeros(EllipticDofMap(m).n)
        x[:m.n_nodes] = 1.0
        assert quad_form(S, x) == pytest.approx(m.boundary_length(GAMMA), rel=1e-13)

    def test_constant_field_divergence_free(self, small_annulus):
        m = small_annulus
        dm = EllipticDofMap(m)
        q = m.edge_normals() @ np.array([0.3, -1.2])
        _, _, _, _, coef = _geometry(m)
        div = 2 * np.sum(coef * q[m.tri_edges], axis=1)
        assert np.max(np.abs(div)) < 1e-13
        assert dm.n_p == len(q)

    def test_gradient_pair_has_zero_interior_fidelity(self, small_annulus):
        # u linear and p its gradient: only the boundary terms survive
        m = small_annulus
        g = np.array([0.7, -0.4])
        x = np.concatenate([m.nodes @ g, m.edge_normals() @ g])
        S, _ = assemble_elliptic_forms(m)
        rows = m.boundary(GAMMA)
        e = m.nodes[m.boundary_edges[rows]]
        lens = np.linalg.norm(e[:, 1] - e[:, 0], axis=1)
        ua, ub = e[:, 0] @ g, e[:, 1] @ g
        flux = np.sum(m.edge_normals()[m.boundary_edge_ids[rows]] * g, axis=1)
        want = np.sum(lens * (ua * ua + ua * ub + ub * ub) / 3) + np.sum(lens * flux ** 2)
        assert quad_form(S, x) == pytest.approx(want, rel=1e-11)

    def test_psd_and_symmetric(self, small_annulus):
        sys = assemble_elliptic(small_annulus, 1.0)
        assert sys.check_psd()
        d = sys.S.todense()
        np.testing.assert_array_equal(d, d.T)
        factorize_system(sys)

    def test_sigma(self, small_annulus):
        S1, _ = assemble_elliptic_forms(small_annulus, np.eye(2))
        S2, _ = assemble_elliptic_forms(small_annulus, np.diag([2.0, 0.5]))
        assert not np.allclose(S1.todense(), S2.todense())
        with pytest.raises(InvalidSystem):
            assemble_elliptic_forms(small_annulus, np.array([[1.0, 2.0], [2.0, 1.0]]))
        with pytest.raises(InvalidSystem):
            assemble_elliptic_forms(small_annulus, np.array([[1.0, 0.1], [0.0, 1.0]]))


class TestLoad:
    def test_zero(self, small_annulus):
        load = assemble_elliptic_load(small_annulus, EllipticData.zeros(small_annulus))
        assert load.c == 0 and not load.ell.any()

    def test_unit_flux_energy(self, small_annulus):
        m = small_annulus
        d = EllipticData(np.zeros(len(m.triangles)), np.zeros(m.n_nodes),
                         np.ones(len(m.boundary_edges)))
        assert assemble_elliptic_load(m, d).c == pytest.approx(m.boundary_length(GAMMA))

    def test_unit_source_on_unit_square(self):
        m = TriMesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]],
                    [[0, 1], [1, 2], [2, 3], [3, 0]], [0, 0, 1, 1])
        d = EllipticData(np.ones(2), np.zeros(4), np.zeros(4))
        assert assemble_elliptic_load(m, d).c == pytest.approx(1.0)

    def test_shapes(self, small_annulus):
        with pytest.raises(DimensionMismatch):
            assemble_elliptic_load(small_annulus, EllipticData(np.zeros(3), np.zeros(3), np.zeros(3)))

    def test_delta_consistent_with_energy(self, small_annulus, rng):
        m = small_annulus
        gnodes, gedges = m.boundary_nodes(GAMMA), m.boundary(GAMMA)
        dD = np.zeros(m.n_nodes)
        dD[gnodes] = rng.standard_normal(len(gnodes))
        dN = np.zeros(len(m.boundary_edges))
        dN[gedges] = rng.standard_normal(len(gedges))
        lens = m.edge_lengths[m.boundary_edge_ids[gedges]]
        W = gamma_mass_matrix(m)[gnodes][:, gnodes]
        delta = l2_delta([dD[gnodes], dN[gedges]], [W, lens])
        c = assemble_elliptic_load(m, EllipticData(np.zeros(len(m.triangles)), dD, dN)).c
        assert delta ** 2 == pytest.approx(c, rel=1e-10)


class TestDirect:
    def test_radial_closed_form(self):
        m = annulus_mesh(30, 120, r_inner=0.5, r_outer=1.0)
        u = solve_direct_robin(m, 2.0, 1.0)
        ex = radial(m, 2.0, 1.0)
        assert np.max(np.abs(u - ex)) <= 1e-2 * np.max(np.abs(ex))

    def test_large_eta_pins_inner_trace(self):
        m = annulus_mesh(10, 40, r_inner=0.5, r_outer=1.0)
        inner = m.boundary_nodes(GAMMA_C)
        traces = [np.max(np.abs(solve_direct_robin(m, eta, 1.0)[inner])) for eta in (1, 10, 1e3, 1e6)]
        assert all(b < a for a, b in zip(traces, traces[1:]))
        assert traces[-1] < 1e-5

    def test_zero_flux(self, small_annulus):
        assert not np.any(solve_direct_robin(small_annulus, 1.0, 0.0))

    def test_zero_eta(self, small_annulus):
        with pytest.raises(NotPositiveDefinite):
            solve_direct_robin(small_annulus, 0.0, 1.0)

    def test_negative_eta(self, small_annulus):
        with pytest.raises(InvalidSystem):
            solve_direct_robin(small_annulus, -1.0, 1.0)


class TestTraces:
    def test_constant(self, small_annulus):
        m = small_annulus
        x = np.zeros(EllipticDofMap(m).n)
        x[:m.n_nodes] = 1.0
        tr = boundary_traces(m, x)
        for name in ("gamma", "gamma_c"):
            assert np.all(tr[name]["u"] == 1.0) and not np.any(tr[name]["flux"])
            assert np.all(np.diff(tr[name]["theta"]) > 0)

    def test_synthesis_reproduces_nodes(self, small_annulus):
        m = small_annulus
        u = solve_direct_robin(m, 1.0, 1.0)
        tr = boundary_traces(m, u)["gamma"]
        np.testing.assert_array_equal(tr["node_u"], u[tr["node"]])
        assert tr["flux"] is None

    def test_bad_length(self, small_annulus):
        with pytest.raises(DimensionMismatch):
            boundary_traces(small_annulus, np.zeros(5))

    def test_transfer_between_meshes(self):
        fine, coarse = annulus_mesh(3, 64), annulus_mesh(2, 16)
        f = lambda p: np.cos(np.arctan2(p[:, 1], p[:, 0]))
        out = sample_gamma_trace(fine, f(fine.nodes), coarse)
        g = coarse.boundary_nodes(GAMMA)
        np.testing.assert_allclose(out[g], f(coarse.nodes[g]), atol=5e-3)
        assert not np.any(out[coarse.boundary_nodes(GAMMA_C)])


class TestRecovery:
    def _state(self, mesh, u_val, flux_val):
        x = np.zeros(EllipticDofMap(mesh).n)
        x[:mesh.n_nodes] = u_val
        rows = mesh.boundary(GAMMA_C)
        x[mesh.n_nodes + mesh.boundary_edge_ids[rows]] = flux_val * mesh.boundary_orientation()[rows]
        return x

    def test_ratio(self, small_annulus):
        prof = recover_robin(small_annulus, self._state(small_annulus, 2.0, -1.0))
        np.testing.assert_allclose(prof.eta, 0.5)

    def test_guard(self, small_annulus):
        m = small_annulus
        x = self._state(m, 2.0, -1.0)
        drop = m.boundary_edges[m.boundary(GAMMA_C)[0]]
        x[drop] = 0.0
        prof = recover_robin(m, x, guard=0.05)
        # neighbours keep half their trace and stay above the guard
        assert len(prof.eta) == len(m.boundary(GAMMA_C)) - 1
        assert m.boundary(GAMMA_C)[0] not in prof.edge

    def test_all_guarded(self, small_annulus):
        with pytest.raises(AllGuarded):
            recover_robin(small_annulus, self._state(small_annulus, 0.0, 1.0))

    def test_bad_guard(self, small_annulus):
        with pytest.raises(InvalidSystem):
            recover_robin(small_annulus, self._state(small_annulus, 1.0, 1.0), guard=0.0)

    def test_pipeline_on_coarse_meshes(self):
        fine, coarse = annulus_mesh(24, 96), annulus_mesh(12, 48)
        _, th = edge_angles(fine, GAMMA_C)
        u = solve_direct_robin(fine, robin_coefficient(th), 1.0)
        gD = sample_gamma_trace(fine, u, coarse)
        gN = np.zeros(len(coarse.boundary_edges))
        gN[coarse.boundary(GAMMA)] = 1.0
        sys = assemble_elliptic(coarse, 1.0)
        load = assemble_elliptic_load(coarse, EllipticData(np.zeros(len(coarse.triangles)), gD, gN))
        x, tr = run_iterated(factorize_system(sys), sys, load, FixedIterations(150))
        # P1/RT0 cannot fit the data exactly: the residual stalls at an O(h) floor
        assert tr.is_monotone() and tr.residuals[-1] < 0.2 * tr.residuals[0]
        prof = recover_robin(coarse, x)
        err = np.mean(np.abs(prof.eta - robin_coefficient(prof.theta)) / robin_coefficient(prof.theta))
        assert err < 0.3


class TestOutput:
    def test_vtk(self, tmp_path, small_annulus):
        p = tmp_path / "f.vtk"
        write_vtk(small_annulus, np.arange(small_annulus.n_nodes, dtype=float), p)
        text = p.read_text().splitlines()
        assert text[0].startswith("# vtk DataFile")
        assert f"POINTS {small_annulus.n_nodes} double" in text
        assert f"CELL_TYPES {len(small_annulus.triangles)}" in text
        assert float(text[-1]) == small_annulus.n_nodes - 1

    def test_nodal_csv(self, small_annulus):
        lines = nodal_csv(small_annulus, np.zeros(small_annulus.n_nodes)).splitlines()
        assert lines[0] == "x,y,u_h" and len(lines) == small_annulus.n_nodes + 1
