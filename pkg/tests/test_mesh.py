import math

import numpy as np
import pytest

from qrc.errors import DegenerateMesh, InvariantViolation, ParseError
from qrc.mesh import (GAMMA, GAMMA_C, TriMesh, annulus_mesh, inner_radius, outer_radius,
                      read_mesh, robin_coefficient, write_mesh)


def unit_square():
    nodes = [[0, 0], [1, 0], [1, 1], [0, 1]]
    tris = [[0, 1, 2], [0, 2, 3]]
    bnd = [[0, 1], [1, 2], [2, 3], [3, 0]]
    return TriMesh(nodes, tris, bnd, [GAMMA, GAMMA, GAMMA_C, GAMMA_C])


class TestProfiles:
    def test_radii(self):
        assert outer_radius(0.0) == pytest.approx(1.1)
        assert outer_radius(math.pi / 2) == pytest.approx(0.95)
        assert inner_radius(0.0) == pytest.approx(0.48)

    @pytest.mark.parametrize("theta,eta", [(5 * math.pi / 4, 0.5), (3 * math.pi / 2, 0.8)])
    def test_robin(self, theta, eta):
        assert robin_coefficient(theta) == pytest.approx(eta)


class TestAnnulus:
    @pytest.mark.parametrize("nr,na", [(2, 8), (3, 12), (7, 40)])
    def test_counts(self, nr, na):
        m = annulus_mesh(nr, na)
        assert m.n_nodes == nr * na
        assert len(m.triangles) == 2 * (nr - 1) * na
        assert len(m.boundary(GAMMA)) == na and len(m.boundary(GAMMA_C)) == na
        assert np.all(m.areas > 0)

    def test_euler(self):
        m = annulus_mesh(5, 20)
        # annulus: V - E + F = 0
        assert m.n_nodes - m.n_edges + len(m.triangles) == 0

    def test_small_parameters(self):
        with pytest.raises(ValueError):
            annulus_mesh(1, 8)
        with pytest.raises(ValueError):
            annulus_mesh(2, 7)

    def test_boundary_on_curves(self):
        m = annulus_mesh(3, 16)
        for tag, radius in ((GAMMA, outer_radius), (GAMMA_C, inner_radius)):
            p = m.nodes[m.boundary_nodes(tag)]
            th = np.arctan2(p[:, 1], p[:, 0])
            np.testing.assert_allclose(np.hypot(p[:, 0], p[:, 1]), radius(th), rtol=1e-13)

    def test_outward_normals(self):
        m = annulus_mesh(4, 24)
        n = m.edge_normals()[m.boundary_edge_ids] * m.boundary_orientation()[:, None]
        mid = m.nodes[m.boundary_edges].mean(axis=1)
        radial = np.sum(n * mid, axis=1)
        assert np.all(radial[m.boundary(GAMMA)] > 0)
        assert np.all(radial[m.boundary(GAMMA_C)] < 0)

    def test_shared_edges_opposite_signs(self):
        m = annulus_mesh(4, 16)
        tally = np.zeros(m.n_edges)
        np.add.at(tally, m.tri_edges.ravel(), m.tri_signs.ravel())
        interior = np.ones(m.n_edges, dtype=bool)
        interior[m.boundary_edge_ids] = False
        assert np.all(tally[interior] == 0)

    def test_custom_radii(self):
        m = annulus_mesh(6, 32, r_inner=0.5, r_outer=1.0)
        area = m.areas.sum()
        # polygonal annulus area
        want = 0.5 * 32 * math.sin(2 * math.pi / 32) * (1.0 - 0.25)
        assert area == pytest.approx(want, rel=1e-12)


class TestInvariants:
    def test_clockwise_triangle(self):
        with pytest.raises(DegenerateMesh):
            TriMesh([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]], [[0, 1], [1, 2], [2, 0]], [0, 0, 1])

    def test_missing_boundary_edge(self):
        with pytest.raises(InvariantViolation):
            TriMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], [[0, 1], [1, 2]], [0, 1])

    def test_interior_edge_tagged(self):
        m = unit_square()
        with pytest.raises(InvariantViolation):
            TriMesh(m.nodes, m.triangles, np.vstack([m.boundary_edges, [[0, 2]]]), [0, 0, 1, 1, 0])

    def test_bad_index(self):
        with pytest.raises(InvariantViolation):
            TriMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 5]], [[0, 1]], [0])

    def test_bad_tag(self):
        m = unit_square()
        with pytest.raises(InvariantViolation):
            TriMesh(m.nodes, m.triangles, m.boundary_edges, [0, 0, 1, 7])

    def test_boundary_length(self):
        m = unit_square()
        assert m.boundary_length(GAMMA) == pytest.approx(2.0)
        assert m.boundary_length("gamma_c") == pytest.approx(2.0)


class TestIO:
    def test_roundtrip(self, tmp_path):
        m = annulus_mesh(3, 10)
        p = tmp_path / "m.txt"
        write_mesh(m, p)
        assert read_mesh(p).same_as(m)

    def test_byte_identical(self, tmp_path):
        write_mesh(annulus_mesh(3, 10), tmp_path / "a.txt")
        write_mesh(annulus_mesh(3, 10), tmp_path / "b.txt")
        assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()

    @pytest.mark.parametrize("text,line", [
        ("nodes 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 2\nboundary 3\n0 1 gamma\n1 2 gamma\n2 0 rim\n", 10),
        ("nodes 3\n0 0\n1 0\n", 4),
        ("nodes x\n", 1),
        ("points 3\n", 1),
        ("nodes 1\n0 0 0\n", 2),
    ])
    def test_parse_errors(self, tmp_path, text, line):
        p = tmp_path / "bad.txt"
        p.write_text(text)
        with pytest.raises(ParseError) as exc:
            read_mesh(p)
        assert exc.value.line == line

    def test_reread_checks_invariants(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("nodes 3\n0 0\n1 0\n0 1\ntriangles 1\n0 2 1\nboundary 3\n"
                     "0 1 gamma\n1 2 gamma\n2 0 gamma_c\n")
        with pytest.raises(DegenerateMesh):
            read_mesh(p)
