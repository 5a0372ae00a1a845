"""Space-time Galerkin discretization of the 1D lateral Cauchy heat problem.

Unknowns on ``Q = (0, T) x (a, b)``: the temperature ``u`` (bilinear in
``(t, x)``) and the flux ``p ~ d_x u`` (constant in time on each slab, linear
in space). Data ``g_D = u(., a)`` and ``g_N = p(., a)`` are known only at
the lateral end ``x = a``; no initial condition is used.

Fidelity form::

    int_Q (d_t u - d_x p)(d_t v - d_x q) + (d_x u - p)(d_x v - q)
      + int_0^T u(t, a) v(t, a) + p(t, a) q(t, a) dt

Penalty form::

    int_Q d_t u d_t v + d_x u d_x v + p q

Degrees of freedom: ``u`` at node ``(k, j)`` (time index ``k``, space index
``j``) is ``k * (Nx + 1) + j``; ``p`` on slab ``k`` at node ``j`` follows all
``u`` dofs at offset ``n_u + k * (Nx + 1) + j``.
"""

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sps

from .core import DiscreteSystem, LoadData
from .errors import DimensionMismatch, InvalidSystem
from .fmt import fmt
from .sparse import TripletList, triplets_to_sym

_GAUSS2 = np.array([-1.0, 1.0]) / math.sqrt(3.0)


@dataclass(frozen=True)
class SpaceTimeGrid:
    a: float = 1.0
    b: float = 2.0
    T: float = 1.0
    Nx: int = 50
    Nt: int = 50

    def __post_init__(self):
        if not self.a < self.b:
            raise InvalidSystem(f"need a < b, got a={self.a}, b={self.b}")
        if not self.T > 0:
            raise InvalidSystem("T must be positive")
        if self.Nx < 1 or self.Nt < 1:
            raise InvalidSystem("Nx and Nt must be at least 1")

    @property
    def h(self):
        return (self.b - self.a) / self.Nx

    @property
    def dt(self):
        return self.T / self.Nt

    @property
    def t_nodes(self):
        return np.linspace(0.0, self.T, self.Nt + 1)

    @property
    def x_nodes(self):
        return np.linspace(self.a, self.b, self.Nx + 1)


@dataclass(frozen=True)
class HeatDofMap:
    grid: SpaceTimeGrid

    @property
    def n_u(self):
        return (self.grid.Nt + 1) * (self.grid.Nx + 1)

    @property
    def n_p(self):
        return self.grid.Nt * (self.grid.Nx + 1)

    @property
    def n(self):
        return self.n_u + self.n_p

    def u(self, k, j):
        return np.asarray(k) * (self.grid.Nx + 1) + np.asarray(j)

    def p(self, k, j):
        return self.n_u + np.asarray(k) * (self.grid.Nx + 1) + np.asarray(j)

    def split(self, coeffs):
        """Nodal ``u`` as ``(Nt+1, Nx+1)`` and ``p`` as ``(Nt, Nx+1)`` arrays."""
        coeffs = np.asarray(coeffs)
        if coeffs.shape != (self.n,):
            raise DimensionMismatch(f"expected {self.n} coefficients, got {coeffs.shape}")
        g = self.grid
        return (coeffs[:self.n_u].reshape(g.Nt + 1, g.Nx + 1),
                coeffs[self.n_u:].reshape(g.Nt, g.Nx + 1))


@dataclass(frozen=True)
class LateralData:
    """Nodal values of ``g_D`` and ``g_N`` at the ``Nt + 1`` time nodes."""

    gD: np.ndarray
    gN: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gD", np.asarray(self.gD, dtype=np.float64).ravel())
        object.__setattr__(self, "gN", np.asarray(self.gN, dtype=np.float64).ravel())


def _cell_matrices(h, dt):
    """Local S and B on one space-time cell.

    Local order: ``u(t0,x0), u(t0,x1), u(t1,x0), u(t1,x1), p(x0), p(x1)``.
    """
    S = np.zeros((6, 6))
    B = np.zeros((6, 6))
    w = 0.25 * h * dt
    for qt in _GAUSS2:
        s = 0.5 * (qt + 1.0)
        for qx in _GAUSS2:
            r = 0.5 * (qx + 1.0)
            du_dt = np.array([-(1 - r), -r, 1 - r, r, 0, 0]) / dt
            du_dx = np.array([-(1 - s), 1 - s, -s, s, 0, 0]) / h
            p_val = np.array([0, 0, 0, 0, 1 - r, r])
            dp_dx = np.array([0, 0, 0, 0, -1, 1]) / h
            heat = du_dt - dp_dx
            grad = du_dx - p_val
            S += w * (np.outer(heat, heat) + np.outer(grad, grad))
            B += w * (np.outer(du_dt, du_dt) + np.outer(du_dx, du_dx) + np.outer(p_val, p_val))
    return S, B


def _slab_boundary_matrix(dt):
    """Boundary term on one slab; local order ``u(t0,a), u(t1,a), p(a)``."""
    M = np.zeros((3, 3))
    for q in _GAUSS2:
        s = 0.5 * (q + 1.0)
        tr_u = np.array([1 - s, s, 0.0])
        tr_p = np.array([0.0, 0.0, 1.0])
        M += 0.5 * dt * (np.outer(tr_u, tr_u) + np.outer(tr_p, tr_p))
    return M


def assemble_heat_forms(grid: SpaceTimeGrid):
    """Assemble the fidelity and penalty Gram matrices ``(S, B)``."""
    dm = HeatDofMap(grid)
    k, j = np.meshgrid(np.arange(grid.Nt), np.arange(grid.Nx), indexing="ij")
    k, j = k.ravel(), j.ravel()
    cell_dofs = np.column_stack([dm.u(k, j), dm.u(k, j + 1), dm.u(k + 1, j),
                                 dm.u(k + 1, j + 1), dm.p(k, j), dm.p(k, j + 1)])
    S_loc, B_loc = _cell_matrices(grid.h, grid.dt)
    ts = TripletList(dm.n)
    tb = TripletList(dm.n)
    ts.add_block(cell_dofs, S_loc)
    tb.add_block(cell_dofs, B_loc)
    slabs = np.arange(grid.Nt)
    slab_dofs = np.column_stack([dm.u(slabs, 0), dm.u(slabs + 1, 0), dm.p(slabs, 0)])
    ts.add_block(slab_dofs, _slab_boundary_matrix(grid.dt))
    return triplets_to_sym(ts), triplets_to_sym(tb)


def assemble_heat(grid: SpaceTimeGrid, eps: float = 1.0) -> DiscreteSystem:
    S, B = assemble_heat_forms(grid)
    return DiscreteSystem(S, B, eps)


def time_mass_matrix(grid: SpaceTimeGrid):
    """Exact L2(0, T) Gram matrix of the piecewise-linear time hat functions."""
    n = grid.Nt + 1
    dt = grid.dt
    main = np.full(n, 2 * dt / 3)
    main[0] = main[-1] = dt / 3
    off = np.full(n - 1, dt / 6)
    return sps.diags([off, main, off], [-1, 0, 1], format="csr")


def _check_data(grid, data):
    n = grid.Nt + 1
    if data.gD.shape != (n,) or data.gN.shape != (n,):
        raise DimensionMismatch(
            f"lateral data must have {n} time values, got {data.gD.shape} and {data.gN.shape}")


def assemble_heat_load(grid: SpaceTimeGrid, data: LateralData, delta=None) -> LoadData:
    """``ell_i = int g_D v_i(., a) + g_N q_i(., a)``, ``c = int g_D^2 + g_N^2``.

    Both by two-point Gauss per slab on the piecewise-linear interpolants.
    """
    _check_data(grid, data)
    dm = HeatDofMap(grid)
    ell = np.zeros(dm.n)
    c = 0.0
    dt = grid.dt
    for q in _GAUSS2:
        s = 0.5 * (q + 1.0)
        gd = (1 - s) * data.gD[:-1] + s * data.gD[1:]
        gn = (1 - s) * data.gN[:-1] + s * data.gN[1:]
        w = 0.5 * dt
        slabs = np.arange(grid.Nt)
        np.add.at(ell, dm.u(slabs, 0), w * (1 - s) * gd)
        np.add.at(ell, dm.u(slabs + 1, 0), w * s * gd)
        np.add.at(ell, dm.p(slabs, 0), w * gn)
        c += w * float(np.sum(gd * gd + gn * gn))
    return LoadData(ell, c, delta)


@dataclass(frozen=True)
class HeatSolution:
    """Closed-form solution of ``d_t u = d_xx u`` with its x-derivative."""

    name: str
    u: Callable
    ux: Callable


def _u1(t, x):
    return (x ** 3 / 3 + x * (1 + 2 * t)) / 8


def _u1x(t, x):
    return (x ** 2 + 1 + 2 * t) / 8


def _u2(t, x):
    return np.exp(-t / 4) * np.sin(x / 2)


def _u2x(t, x):
    return 0.5 * np.exp(-t / 4) * np.cos(x / 2)


# u2 is taken as exp(-t/4) sin(x/2); the printed sin(t/2) is not a heat solution.
MANUFACTURED = {
    "u1": HeatSolution("u1", _u1, _u1x),
    "u2": HeatSolution("u2", _u2, _u2x),
}


def manufactured_heat(which: str, grid: SpaceTimeGrid):
    """Exact lateral data and nodal field of a manufactured solution.

    Returns ``(LateralData, field)`` with ``field`` of shape ``(Nt+1, Nx+1)``.
    """
    if which not in MANUFACTURED:
        raise InvalidSystem(f"unknown manufactured solution {which!r}; choose u1 or u2")
    sol = MANUFACTURED[which]
    t = grid.t_nodes
    data = LateralData(sol.u(t, grid.a), sol.ux(t, grid.a))
    field = sol.u(t[:, None], grid.x_nodes[None, :])
    return data, field


def heat_error_metrics(grid: SpaceTimeGrid, coeffs, exact):
    """Relative nodal max error and absolute L2(Q) error of ``u_h``.

    ``exact`` is a manufactured solution name, a :class:`HeatSolution`, a
    callable ``u(t, x)`` or a nodal array; arrays are compared through their
    bilinear interpolant in the L2 integral.
    """
    dm = HeatDofMap(grid)
    uh, _ = dm.split(coeffs)
    t, x = grid.t_nodes, grid.x_nodes
    if isinstance(exact, str):
        exact = MANUFACTURED[exact]
    if isinstance(exact, HeatSolution):
        exact = exact.u
    if callable(exact):
        nodal = exact(t[:, None], x[None, :])
        func = exact
    else:
        nodal = np.asarray(exact, dtype=np.float64)
        func = None
    if nodal.shape != uh.shape:
        raise DimensionMismatch(f"exact field {nodal.shape} vs grid {uh.shape}")
    peak = np.max(np.abs(nodal))
    if peak == 0:
        raise ZeroDivisionError("exact field vanishes identically")
    rel_linf = float(np.max(np.abs(uh - nodal)) / peak)
    err = uh - nodal if func is None else uh
    total = 0.0
    for qt in _GAUSS2:
        s = 0.5 * (qt + 1.0)
        for qx in _GAUSS2:
            r = 0.5 * (qx + 1.0)
            val = ((1 - s) * (1 - r) * err[:-1, :-1] + (1 - s) * r * err[:-1, 1:]
                   + s * (1 - r) * err[1:, :-1] + s * r * err[1:, 1:])
            if func is not None:
                tq = t[:-1, None] + s * grid.dt
                xq = x[None, :-1] + r * grid.h
                val = val - func(tq, xq)
            total += 0.25 * grid.h * grid.dt * float(np.sum(val * val))
    return {"rel_linf": rel_linf, "l2": math.sqrt(total)}


def field_csv(grid: SpaceTimeGrid, coeffs, exact_field) -> str:
    """CSV ``t,x,u_h,u_exact`` in time-major order."""
    uh, _ = HeatDofMap(grid).split(coeffs)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["t", "x", "u_h", "u_exact"])
    for k, tk in enumerate(grid.t_nodes):
        for j, xj in enumerate(grid.x_nodes):
            w.writerow([fmt(tk), fmt(xj), fmt(uh[k, j]), fmt(exact_field[k, j])])
    return out.getvalue()
