"""Iterated quasi-reversibility on a Galerkin-discretized system.

The engine never sees the data ``y`` itself. A regularized problem is
described by the fidelity Gram matrix ``S`` (entries ``(A phi_j, A phi_i)``),
the penalty Gram matrix ``B`` (entries ``b(phi_j, phi_i)``) and a weight
``eps``; the data enters only through the load ``ell_i = (y, A phi_i)`` and
the energy ``c = ||y||^2``. With these,

* the regularized solution solves ``(S + eps B) x = ell``,
* each iterate solves ``(S + eps B) X^M = ell + eps B X^{M-1}``, ``X^{-1} = 0``,
* the residual ``||A x - y||`` is ``sqrt(x^T S x - 2 ell^T x + c)``.

One factorization of ``K = S + eps B`` serves every iterate.
"""

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .fmt import fmt
from .errors import DimensionMismatch, InvalidSystem, NegativeResidual
from .sparse import SymSparse, factor_spd, matvec, quad_form, solve_rhs

TOL_PSD = 1e-10
TOL_MONO = 1e-12
DEFAULT_MAX_ITER = 10_000


def _as_sym(m):
    if isinstance(m, SymSparse):
        return m
    a = np.asarray(m, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidSystem(f"expected a square matrix, got shape {a.shape}")
    if not np.array_equal(a, a.T):
        raise InvalidSystem("matrix is not exactly symmetric")
    return SymSparse.from_dense(a)


@dataclass(frozen=True)
class DiscreteSystem:
    """Gram matrices ``S``, ``B`` and the regularization weight ``eps``.

    Dense arrays are accepted and must be exactly symmetric; ``SymSparse``
    input is symmetric by construction.
    """

    S: SymSparse
    B: SymSparse
    eps: float

    def __post_init__(self):
        object.__setattr__(self, "S", _as_sym(self.S))
        object.__setattr__(self, "B", _as_sym(self.B))
        if self.S.n != self.B.n:
            raise DimensionMismatch(f"S is {self.S.n}x{self.S.n}, B is {self.B.n}x{self.B.n}")
        eps = float(self.eps)
        if not (eps > 0 and math.isfinite(eps)):
            raise InvalidSystem(f"eps must be positive and finite, got {self.eps}")
        object.__setattr__(self, "eps", eps)

    @property
    def n(self):
        return self.S.n

    def with_eps(self, eps):
        return DiscreteSystem(self.S, self.B, eps)

    def stiffness(self) -> SymSparse:
        """``K = S + eps B``."""
        return self.S + self.B.scaled(self.eps)

    def check_psd(self, n_probe=16, seed=0, tol=TOL_PSD):
        """Probe ``x^T S x`` and ``x^T B x`` with random vectors.

        Returns True when no probe goes below ``-tol * ||M|| * ||x||^2``.
        """
        rng = np.random.default_rng(seed)
        for m in (self.S, self.B):
            scale = max(np.max(np.abs(m.data), initial=0.0), 1e-300)
            for _ in range(n_probe):
                x = rng.standard_normal(self.n)
                if quad_form(m, x) < -tol * scale * (x @ x):
                    return False
        return True


@dataclass(frozen=True)
class LoadData:
    """Galerkin load ``ell``, data energy ``c`` and optional noise level."""

    ell: np.ndarray
    c: float
    delta: Optional[float] = None

    def __post_init__(self):
        ell = np.array(self.ell, dtype=np.float64).ravel()
        ell.setflags(write=False)
        object.__setattr__(self, "ell", ell)
        c = float(self.c)
        if not c >= 0:
            raise InvalidSystem(f"data energy must be nonnegative, got {self.c}")
        object.__setattr__(self, "c", c)
        if self.delta is not None:
            d = float(self.delta)
            if not d >= 0:
                raise InvalidSystem(f"noise level must be nonnegative, got {self.delta}")
            object.__setattr__(self, "delta", d)

    @property
    def n(self):
        return len(self.ell)

    @classmethod
    def admissible(cls, sys: DiscreteSystem, x_s, delta=None):
        """Load generated by an exact solution: ``ell = S x_s``, ``c = x_s^T S x_s``."""
        x_s = np.asarray(x_s, dtype=np.float64)
        return cls(matvec(sys.S, x_s), quad_form(sys.S, x_s), delta)


@dataclass(frozen=True)
class Morozov:
    """Stop at the first iterate whose residual is at most ``r * delta``."""

    r: float
    delta: Optional[float] = None
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if not self.r > 0:
            raise InvalidSystem(f"Morozov factor r must be positive, got {self.r}")
        if self.delta is not None and not self.delta >= 0:
            raise InvalidSystem(f"noise level must be nonnegative, got {self.delta}")
        if self.max_iter < 1:
            raise InvalidSystem("max_iter must be at least 1")


@dataclass(frozen=True)
class FixedIterations:
    """Compute ``X^0 .. X^M`` and return ``X^M``."""

    M: int

    def __post_init__(self):
        if self.M < 0:
            raise InvalidSystem("M must be nonnegative")


@dataclass(frozen=True)
class ResidualFloor:
    """Stop once the residual is at most ``tol``."""

    tol: float
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidSystem(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise InvalidSystem("max_iter must be at least 1")


StoppingRule = Union[Morozov, FixedIterations, ResidualFloor]


class StopReason(enum.Enum):
    MOROZOV_REACHED = "MorozovReached"
    MAX_ITERATIONS = "MaxIterations"
    FLOOR_REACHED = "FloorReached"
    FIXED = "Fixed"


@dataclass(frozen=True)
class TraceRow:
    M: int
    residual: float
    b_seminorm: float
    ab_norm: float


@dataclass
class IterationTrace:
    rows: list = field(default_factory=list)
    stop_reason: Optional[StopReason] = None
    threshold: Optional[float] = None

    def __len__(self):
        return len(self.rows)

    @property
    def M_stop(self):
        return self.rows[-1].M if self.rows else None

    @property
    def residuals(self):
        return np.array([r.residual for r in self.rows])

    @property
    def b_seminorms(self):
        return np.array([r.b_seminorm for r in self.rows])

    @property
    def ab_norms(self):
        return np.array([r.ab_norm for r in self.rows])

    def is_monotone(self, rtol=TOL_MONO):
        """Residuals strictly decrease and b-seminorms strictly increase.

        A step counts as strict when it moves by more than ``-rtol`` times
        the larger of the two values, i.e. roundoff-level stalls are
        tolerated but reversals are not.
        """
        res = self.residuals
        bsn = self.b_seminorms
        for k in range(1, len(res)):
            if res[k] - res[k - 1] > rtol * max(res[k], res[k - 1]):
                return False
            if bsn[k - 1] - bsn[k] > rtol * max(bsn[k], bsn[k - 1]):
                return False
        return True

    def to_csv(self, fh=None):
        """Write ``iteration,residual,b_seminorm,ab_norm`` rows.

        Returns the CSV text when ``fh`` is None.
        """
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["iteration", "residual", "b_seminorm", "ab_norm"])
        for r in self.rows:
            w.writerow([r.M, fmt(r.residual), fmt(r.b_seminorm), fmt(r.ab_norm)])
        if fh is None:
            return out.getvalue()


class SystemFactor:
    """Reusable factorization of ``K = S + eps B``.

    Immutable once built; :meth:`solve` allocates its own work vector so a
    single instance may be shared between threads.
    """

    def __init__(self, sys: DiscreteSystem, handle):
        self.n = sys.n
        self.eps = sys.eps
        self.handle = handle

    def solve(self, rhs):
        return solve_rhs(self.handle, rhs)


def factorize_system(sys: DiscreteSystem) -> SystemFactor:
    """Factor ``S + eps B``; raises ``NotPositiveDefinite`` if it is not SPD."""
    return SystemFactor(sys, factor_spd(sys.stiffness()))


def _check_dims(n, *vectors):
    for v in vectors:
        if len(v) != n:
            raise DimensionMismatch(f"expected length {n}, got {len(v)}")


def solve_single_qr(factor: SystemFactor, load: LoadData):
    """The regularized solution ``x_eps``: ``(S + eps B) x = ell``."""
    _check_dims(factor.n, load.ell)
    return factor.solve(load.ell)


def iterate_step(factor: SystemFactor, sys: DiscreteSystem, load: LoadData, x_prev):
    """One iterated step: ``(S + eps B) X^M = ell + eps B X^{M-1}``."""
    x_prev = np.asarray(x_prev, dtype=np.float64)
    _check_dims(factor.n, load.ell, x_prev)
    if sys.n != factor.n:
        raise DimensionMismatch("system and factor sizes differ")
    return factor.solve(load.ell + sys.eps * matvec(sys.B, x_prev))


def derivative_sequence(factor: SystemFactor, sys: DiscreteSystem, load: LoadData, M: int):
    """Derivatives ``x^(0..M)`` of ``eps -> x_eps``.

    ``x^(0) = x_eps`` and ``(S + eps B) x^(m+1) = -(m+1) B x^(m)``.
    """
    if M < 0:
        raise InvalidSystem("M must be nonnegative")
    x = solve_single_qr(factor, load)
    out = [x]
    for m in range(M):
        x = factor.solve(-(m + 1) * matvec(sys.B, x))
        out.append(x)
    return out


def _residual_from(xsx, ellx, c, tol_psd=TOL_PSD):
    r2 = xsx - 2.0 * ellx + c
    if r2 < 0:
        if r2 < -tol_psd * max(c, xsx):
            raise NegativeResidual(f"squared residual {r2:.3e} with c = {c:.3e}")
        return 0.0
    return math.sqrt(r2)


def residual_norm(sys: DiscreteSystem, load: LoadData, x, tol_psd=TOL_PSD):
    """``||A x - y||`` evaluated from the quadratic form.

    Raises
    ------
    NegativeResidual
        If the squared residual is below ``-tol_psd`` times the data scale,
        which only happens when ``ell`` and ``c`` are inconsistent.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_dims(sys.n, x, load.ell)
    return _residual_from(quad_form(sys.S, x), float(load.ell @ x), load.c, tol_psd)


def seminorm_b(sys: DiscreteSystem, x):
    x = np.asarray(x, dtype=np.float64)
    _check_dims(sys.n, x)
    return math.sqrt(max(0.0, quad_form(sys.B, x)))


def norm_ab(sys: DiscreteSystem, x):
    """``sqrt(x^T S x + x^T B x)``, the norm the method is analysed in."""
    x = np.asarray(x, dtype=np.float64)
    _check_dims(sys.n, x)
    return math.sqrt(max(0.0, quad_form(sys.S, x) + quad_form(sys.B, x)))


def _resolve(rule, load):
    if isinstance(rule, Morozov):
        delta = rule.delta if rule.delta is not None else load.delta
        if delta is None:
            raise InvalidSystem("Morozov rule needs a noise level (rule.delta or load.delta)")
        return rule.r * delta, rule.max_iter
    if isinstance(rule, ResidualFloor):
        return rule.tol, rule.max_iter
    if isinstance(rule, FixedIterations):
        return None, rule.M + 1
    raise InvalidSystem(f"unknown stopping rule {rule!r}")


def run_iterated(factor: SystemFactor, sys: DiscreteSystem, load: LoadData,
                 rule: StoppingRule, callback: Optional[Callable] = None):
    """Iterate from ``X^{-1} = 0`` until ``rule`` is met.

    Returns the last iterate and its :class:`IterationTrace`. Running out of
    iterations is reported through ``trace.stop_reason`` rather than raised.
    """
    threshold, n_iter = _resolve(rule, load)
    _check_dims(factor.n, load.ell)
    trace = IterationTrace(threshold=threshold)
    x = np.zeros(factor.n)
    bx = np.zeros(factor.n)
    for M in range(n_iter):
        x = factor.solve(load.ell + sys.eps * bx)
        sx = matvec(sys.S, x)
        bx = matvec(sys.B, x)
        xsx = float(x @ sx)
        xbx = max(0.0, float(x @ bx))
        row = TraceRow(M, _residual_from(xsx, float(load.ell @ x), load.c),
                       math.sqrt(xbx), math.sqrt(max(0.0, xsx + xbx)))
        trace.rows.append(row)
        if callback is not None:
            callback(row, x)
        if threshold is not None and row.residual <= threshold:
            trace.stop_reason = (StopReason.MOROZOV_REACHED if isinstance(rule, Morozov)
                                 else StopReason.FLOOR_REACHED)
            return x, trace
    trace.stop_reason = (StopReason.FIXED if isinstance(rule, FixedIterations)
                         else StopReason.MAX_ITERATIONS)
    return x, trace


@dataclass(frozen=True)
class SweepRow:
    eps: float
    residual: float
    error_ab: Optional[float] = None


def epsilon_sweep(sys_builder: Callable[[float], DiscreteSystem], eps_grid: Sequence[float],
                  load: LoadData, x_s=None):
    """Single regularized solves over a strictly increasing grid of weights.

    ``sys_builder(eps)`` returns the system for one weight. With an exact
    solution ``x_s`` the ``||x_eps - x_s||_{A,b}`` column is filled in.
    """
    grid = [float(e) for e in eps_grid]
    if any(e <= 0 for e in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidSystem("eps grid must be positive and strictly increasing")
    rows = []
    for eps in grid:
        sys = sys_builder(eps)
        x = solve_single_qr(factorize_system(sys), load)
        err = None if x_s is None else norm_ab(sys, x - np.asarray(x_s, dtype=np.float64))
        rows.append(SweepRow(eps, residual_norm(sys, load, x), err))
    return rows
