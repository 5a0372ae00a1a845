"""Mixed P1 / lowest-order Raviart-Thomas discretization of the elliptic
Cauchy problem on a triangulated domain.

Unknowns: the potential ``u`` (continuous, piecewise linear, one dof per
node) and the flux ``p ~ sigma grad u`` (RT0, one dof per edge). An RT0 dof is
the constant normal component of ``p`` on its edge, measured against the
edge's reference normal (see :class:`qrc.mesh.TriMesh`). On a triangle with
vertices ``P_i`` the basis function attached to the edge opposite ``P_i`` is
``s_i |e_i| / (2 |T|) (x - P_i)``, whose divergence is ``s_i |e_i| / |T|``.

Fidelity form::

    int_Omega (sigma grad u - p).(sigma grad v - q) + div p div q
      + int_Gamma u v + (p.nu)(q.nu)

Penalty form::

    int_Omega grad u . grad v + p . q

Unknown numbering: all ``u`` dofs (node order), then all ``p`` dofs (edge
order).
"""

import csv
import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .core import DiscreteSystem, LoadData
from .errors import AllGuarded, DimensionMismatch, InvalidSystem, NotPositiveDefinite
from .fmt import fmt
from .mesh import GAMMA, GAMMA_C, TriMesh, polar_angle
from .sparse import TripletList, factor_spd, matvec, solve_rhs, triplets_to_sym


@dataclass(frozen=True)
class EllipticDofMap:
    mesh: TriMesh

    @property
    def n_u(self):
        return self.mesh.n_nodes

    @property
    def n_p(self):
        return self.mesh.n_edges

    @property
    def n(self):
        return self.n_u + self.n_p

    def split(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.shape != (self.n,):
            raise DimensionMismatch(f"expected {self.n} coefficients, got {coeffs.shape}")
        return coeffs[:self.n_u], coeffs[self.n_u:]


@dataclass(frozen=True)
class EllipticData:
    """Source per triangle, Dirichlet values per node, Neumann values per boundary edge.

    Only entries attached to ``gamma`` are read for ``gD`` and ``gN``.
    """

    f: np.ndarray
    gD: np.ndarray
    gN: np.ndarray

    @classmethod
    def zeros(cls, mesh: TriMesh):
        return cls(np.zeros(len(mesh.triangles)), np.zeros(mesh.n_nodes),
                   np.zeros(len(mesh.boundary_edges)))


@dataclass(frozen=True)
class RobinProfile:
    theta: np.ndarray
    eta: np.ndarray
    edge: np.ndarray


def _geometry(mesh: TriMesh):
    p = mesh.nodes[mesh.triangles]                      # (nt, 3, 2)
    area = mesh.areas
    # grad of barycentric lambda_i: rotate the opposite edge P_{i+1} -> P_{i+2}
    opp = p[:, [2, 0, 1]] - p[:, [1, 2, 0]]            # (nt, 3, 2)
    grad = np.stack([-opp[..., 1], opp[..., 0]], axis=-1) / (2 * area)[:, None, None]
    elen = np.linalg.norm(opp, axis=-1)                 # |e_i|, edge opposite vertex i
    coef = mesh.tri_signs * elen / (2 * area)[:, None]  # RT0 scale per local edge
    return p, area, grad, elen, coef


def _rt_values(p, coef, x):
    """RT0 basis values at points ``x`` (nt, 2) -> (nt, 3, 2)."""
    return coef[:, :, None] * (x[:, None, :] - p)


def _midpoints(p):
    return [0.5 * (p[:, 1] + p[:, 2]), 0.5 * (p[:, 2] + p[:, 0]), 0.5 * (p[:, 0] + p[:, 1])]


def _element_dofs(mesh: TriMesh):
    return np.column_stack([mesh.triangles, mesh.n_nodes + mesh.tri_edges])


def _gamma_edge_data(mesh: TriMesh):
    rows = mesh.boundary(GAMMA)
    nodes = mesh.boundary_edges[rows]
    e = mesh.nodes[nodes]
    length = np.linalg.norm(e[:, 1] - e[:, 0], axis=1)
    return rows, nodes, length, mesh.boundary_edge_ids[rows], mesh.boundary_orientation()[rows]


def assemble_elliptic_forms(mesh: TriMesh, sigma=None):
    """Fidelity and penalty Gram matrices ``(S, B)`` for a constant SPD ``sigma``."""
    sigma = np.eye(2) if sigma is None else np.asarray(sigma, dtype=np.float64)
    if sigma.shape != (2, 2) or not np.array_equal(sigma, sigma.T):
        raise InvalidSystem("sigma must be a symmetric 2x2 matrix")
    if np.any(np.linalg.eigvalsh(sigma) <= 0):
        raise InvalidSystem("sigma must be positive definite")
    p, area, grad, elen, coef = _geometry(mesh)
    nt = len(area)
    div = 2 * coef                                            # (nt, 3)
    sgrad = grad @ sigma.T                                    # sigma grad lambda_i
    S_loc = np.zeros((nt, 6, 6))
    B_loc = np.zeros((nt, 6, 6))
    B_loc[:, :3, :3] = area[:, None, None] * np.einsum("tik,tjk->tij", grad, grad)
    for xq in _midpoints(p):
        w = (area / 3)[:, None, None]
        phi = _rt_values(p, coef, xq)                         # (nt, 3, 2)
        G = np.concatenate([sgrad, -phi], axis=1)             # (nt, 6, 2): sigma grad u - p
        S_loc += w * np.einsum("tik,tjk->tij", G, G)
        B_loc[:, 3:, 3:] += w * np.einsum("tik,tjk->tij", phi, phi)
    D = np.concatenate([np.zeros((nt, 3)), div], axis=1)
    S_loc += area[:, None, None] * np.einsum("ti,tj->tij", D, D)

    dofs = _element_dofs(mesh)
    ts = TripletList(mesh.n_nodes + mesh.n_edges)
    tb = TripletList(mesh.n_nodes + mesh.n_edges)
    ts.add_block(dofs, S_loc)
    tb.add_block(dofs, B_loc)

    _, gnodes, glen, gids, _ = _gamma_edge_data(mesh)
    mass = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6
    ts.add_block(gnodes, glen[:, None, None] * mass)
    ts.add(mesh.n_nodes + gids, mesh.n_nodes + gids, glen)
    return triplets_to_sym(ts), triplets_to_sym(tb)


def assemble_elliptic(mesh: TriMesh, eps: float = 1.0, sigma=None) -> DiscreteSystem:
    S, B = assemble_elliptic_forms(mesh, sigma)
    return DiscreteSystem(S, B, eps)


def _check_data(mesh, data):
    f = np.asarray(data.f, dtype=np.float64)
    gD = np.asarray(data.gD, dtype=np.float64)
    gN = np.asarray(data.gN, dtype=np.float64)
    if f.shape != (len(mesh.triangles),):
        raise DimensionMismatch(f"f needs one value per triangle, got {f.shape}")
    if gD.shape != (mesh.n_nodes,):
        raise DimensionMismatch(f"gD needs one value per node, got {gD.shape}")
    if gN.shape != (len(mesh.boundary_edges),):
        raise DimensionMismatch(f"gN needs one value per boundary edge, got {gN.shape}")
    return f, gD, gN


def assemble_elliptic_load(mesh: TriMesh, data: EllipticData, delta=None) -> LoadData:
    """Load ``-int f div q + int_Gamma gD v + gN q.nu`` and energy ``c``.

    ``gD`` is linear and ``gN`` constant on each edge; both integrals are exact.
    """
    f, gD, gN = _check_data(mesh, data)
    _, area, _, elen, _ = _geometry(mesh)
    n = mesh.n_nodes + mesh.n_edges
    ell = np.zeros(n)
    np.add.at(ell, mesh.n_nodes + mesh.tri_edges, -f[:, None] * mesh.tri_signs * elen)
    rows, gnodes, glen, gids, orient = _gamma_edge_data(mesh)
    ga = gD[gnodes[:, 0]]
    gb = gD[gnodes[:, 1]]
    np.add.at(ell, gnodes[:, 0], glen * (2 * ga + gb) / 6)
    np.add.at(ell, gnodes[:, 1], glen * (ga + 2 * gb) / 6)
    gn = gN[rows]
    np.add.at(ell, mesh.n_nodes + gids, gn * glen * orient)
    c = (float(np.sum(f * f * area))
         + float(np.sum(glen * (ga * ga + ga * gb + gb * gb) / 3))
         + float(np.sum(gn * gn * glen)))
    return LoadData(ell, c, delta)


def gamma_mass_matrix(mesh: TriMesh, tag=GAMMA):
    """L2 Gram matrix of the nodal hat traces on one tagged boundary part."""
    rows = mesh.boundary(tag)
    nodes = mesh.boundary_edges[rows]
    e = mesh.nodes[nodes]
    length = np.linalg.norm(e[:, 1] - e[:, 0], axis=1)
    i, j = nodes[:, 0], nodes[:, 1]
    r = np.concatenate([i, j, i, j])
    c = np.concatenate([i, j, j, i])
    v = np.concatenate([length / 3, length / 3, length / 6, length / 6])
    return sps.coo_matrix((v, (r, c)), shape=(mesh.n_nodes, mesh.n_nodes)).tocsr()


def edge_angles(mesh: TriMesh, tag):
    rows = mesh.boundary(tag)
    mid = mesh.nodes[mesh.boundary_edges[rows]].mean(axis=1)
    return rows, polar_angle(mid)


def solve_direct_robin(mesh: TriMesh, eta, gN_outer):
    """P1 solution of ``-lap u = 0``, ``du/dnu = gN`` on gamma, ``du/dnu + eta u = 0`` on gamma_c.

    ``eta`` holds one value per ``gamma_c`` edge and ``gN_outer`` one value per
    ``gamma`` edge (scalars broadcast), both in ``mesh.boundary(...)`` order.
    """
    rc = mesh.boundary(GAMMA_C)
    rg = mesh.boundary(GAMMA)
    eta = np.broadcast_to(np.asarray(eta, dtype=np.float64), rc.shape)
    gN = np.broadcast_to(np.asarray(gN_outer, dtype=np.float64), rg.shape)
    if np.any(eta < 0):
        raise InvalidSystem("Robin coefficient must be nonnegative")
    _, area, grad, _, _ = _geometry(mesh)
    t = TripletList(mesh.n_nodes)
    t.add_block(mesh.triangles, area[:, None, None] * np.einsum("tik,tjk->tij", grad, grad))
    mass = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6
    cn = mesh.boundary_edges[rc]
    clen = np.linalg.norm(np.diff(mesh.nodes[cn], axis=1)[:, 0], axis=1)
    t.add_block(cn, (eta * clen)[:, None, None] * mass)
    K = triplets_to_sym(t)
    gnodes = mesh.boundary_edges[rg]
    glen = np.linalg.norm(np.diff(mesh.nodes[gnodes], axis=1)[:, 0], axis=1)
    rhs = np.zeros(mesh.n_nodes)
    np.add.at(rhs, gnodes[:, 0], 0.5 * gN * glen)
    np.add.at(rhs, gnodes[:, 1], 0.5 * gN * glen)
    if not np.any(eta > 0):
        raise NotPositiveDefinite(0)
    u = solve_rhs(factor_spd(K), rhs)
    res = np.linalg.norm(matvec(K, u) - rhs)
    if res > 1e-10 * max(np.linalg.norm(rhs), 1e-300):
        raise ArithmeticError(f"direct solve residual {res:.3e} too large")
    return u


def boundary_traces(mesh: TriMesh, coeffs):
    """Per-edge trace tables on ``gamma`` and ``gamma_c``, sorted by angle.

    ``coeffs`` is either a full (u, p) vector or nodal ``u`` only, in which
    case the flux column is None. Each table is a dict with keys ``edge``
    (row into ``boundary_edges``), ``theta`` (edge midpoint angle), ``u``
    (edge-averaged trace), ``flux`` (``p . nu``), plus ``node_theta`` and
    ``node_u`` for the nodal trace.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    dm = EllipticDofMap(mesh)
    if coeffs.shape == (dm.n,):
        u, p = dm.split(coeffs)
    elif coeffs.shape == (dm.n_u,):
        u, p = coeffs, None
    else:
        raise DimensionMismatch(f"expected {dm.n} or {dm.n_u} coefficients, got {coeffs.shape}")
    orient = mesh.boundary_orientation()
    out = {}
    for name, tag in (("gamma", GAMMA), ("gamma_c", GAMMA_C)):
        rows, theta = edge_angles(mesh, tag)
        order = np.argsort(theta, kind="stable")
        rows, theta = rows[order], theta[order]
        ends = mesh.boundary_edges[rows]
        ubar = 0.5 * (u[ends[:, 0]] + u[ends[:, 1]])
        flux = None if p is None else p[mesh.boundary_edge_ids[rows]] * orient[rows]
        nodes = mesh.boundary_nodes(tag)
        ntheta = polar_angle(mesh.nodes[nodes])
        norder = np.argsort(ntheta, kind="stable")
        out[name] = {"edge": rows, "theta": theta, "u": ubar, "flux": flux,
                     "node": nodes[norder], "node_theta": ntheta[norder],
                     "node_u": u[nodes[norder]]}
    return out


def recover_robin(mesh: TriMesh, coeffs, guard: float = 0.05) -> RobinProfile:
    """Robin coefficient ``-(p.nu) / u`` on each ``gamma_c`` edge.

    Edges whose averaged trace is below ``guard`` times the largest one are
    dropped.
    """
    if not guard > 0:
        raise InvalidSystem("guard must be positive")
    tr = boundary_traces(mesh, coeffs)["gamma_c"]
    if tr["flux"] is None:
        raise DimensionMismatch("flux coefficients are required")
    ubar = tr["u"]
    peak = np.max(np.abs(ubar))
    keep = np.abs(ubar) >= guard * peak if peak > 0 else np.zeros(len(ubar), dtype=bool)
    if not np.any(keep):
        raise AllGuarded("every gamma_c edge fell below the trace guard")
    return RobinProfile(tr["theta"][keep], -tr["flux"][keep] / ubar[keep], tr["edge"][keep])


def sample_gamma_trace(src: TriMesh, u_src, dst: TriMesh):
    """Nodal values on ``dst``'s gamma nodes read off ``src``'s gamma trace.

    Interpolation is linear in polar angle between consecutive source
    boundary nodes (periodic). Returns a per-node array for ``dst`` that is
    zero away from gamma.
    """
    nodes = src.boundary_nodes(GAMMA)
    th = polar_angle(src.nodes[nodes])
    order = np.argsort(th, kind="stable")
    th, vals = th[order], np.asarray(u_src)[nodes[order]]
    th_ext = np.concatenate([th[-1:] - 2 * np.pi, th, th[:1] + 2 * np.pi])
    v_ext = np.concatenate([vals[-1:], vals, vals[:1]])
    out = np.zeros(dst.n_nodes)
    dnodes = dst.boundary_nodes(GAMMA)
    out[dnodes] = np.interp(polar_angle(dst.nodes[dnodes]), th_ext, v_ext)
    return out


def write_vtk(mesh: TriMesh, u, path, title="qrc field"):
    """Legacy ASCII VTK unstructured grid with point data ``u``."""
    u = np.asarray(u, dtype=np.float64)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_nodes} double"]
    lines += [f"{fmt(x)} {fmt(y)} 0.0" for x, y in mesh.nodes]
    nt = len(mesh.triangles)
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    lines += [f"POINT_DATA {mesh.n_nodes}", "SCALARS u double 1", "LOOKUP_TABLE default"]
    lines += [fmt(v) for v in u]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def nodal_csv(mesh: TriMesh, u, exact=None) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["x", "y", "u_h"] + ([] if exact is None else ["u_exact"]))
    for k, (x, y) in enumerate(mesh.nodes):
        row = [fmt(x), fmt(y), fmt(u[k])]
        if exact is not None:
            row.append(fmt(exact[k]))
        w.writerow(row)
    return out.getvalue()
