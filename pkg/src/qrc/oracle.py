"""Brute-force dense references used to cross-check the sparse engine.

Nothing here touches :mod:`qrc.sparse`: elimination is plain Gaussian
elimination with partial pivoting on small dense arrays.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidSystem, SingularMatrix

MAX_N = 64


@dataclass(frozen=True)
class DenseSystem:
    S: np.ndarray
    B: np.ndarray
    eps: float

    def __post_init__(self):
        S = np.array(self.S, dtype=np.float64, ndmin=2)
        B = np.array(self.B, dtype=np.float64, ndmin=2)
        if S.shape != B.shape or S.shape[0] != S.shape[1]:
            raise DimensionMismatch(f"S {S.shape} and B {B.shape} must be equal and square")
        if S.shape[0] > MAX_N:
            raise InvalidSystem(f"dense oracle is capped at N = {MAX_N}")
        if not (np.array_equal(S, S.T) and np.array_equal(B, B.T)):
            raise InvalidSystem("S and B must be exactly symmetric")
        if not self.eps > 0:
            raise InvalidSystem("eps must be positive")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "B", B)

    @property
    def n(self):
        return self.S.shape[0]

    @property
    def K(self):
        return self.S + self.eps * self.B


def gauss_solve(a, rhs):
    """Solve ``a x = rhs`` by elimination with partial pivoting."""
    a = np.array(a, dtype=np.float64, ndmin=2)
    x = np.array(rhs, dtype=np.float64).ravel()
    n = a.shape[0]
    if a.shape != (n, n) or x.shape != (n,):
        raise DimensionMismatch(f"matrix {a.shape} with rhs {x.shape}")
    scale = np.max(np.abs(a), initial=0.0)
    for k in range(n):
        piv = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[piv, k]) <= 1e-14 * scale or scale == 0.0:
            raise SingularMatrix(f"zero pivot in column {k}")
        if piv != k:
            a[[k, piv]] = a[[piv, k]]
            x[[k, piv]] = x[[piv, k]]
        f = a[k + 1:, k] / a[k, k]
        a[k + 1:, k:] -= np.outer(f, a[k, k:])
        x[k + 1:] -= f * x[k]
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - a[k, k + 1:] @ x[k + 1:]) / a[k, k]
    return x


def dense_qr_solve(sys: DenseSystem, ell):
    return gauss_solve(sys.K, ell)


def taylor_sum(derivs, eps, M):
    """``sum_{m<=M} (-1)^m eps^m / m! * derivs[m]``."""
    if M >= len(derivs):
        raise InvalidSystem(f"need {M + 1} derivatives, got {len(derivs)}")
    out = np.zeros_like(np.asarray(derivs[0], dtype=np.float64))
    for m in range(M + 1):
        out = out + (-1) ** m * eps ** m / math.factorial(m) * np.asarray(derivs[m])
    return out


def dense_iterates(sys: DenseSystem, ell, M):
    """``X^0 .. X^M`` by direct dense elimination at every step."""
    x = np.zeros(sys.n)
    out = []
    for _ in range(M + 1):
        x = dense_qr_solve(sys, np.asarray(ell) + sys.eps * sys.B @ x)
        out.append(x)
    return out


def geometric_error_form(sys: DenseSystem, x_star, M):
    """``X^M`` for exact data ``ell = S x_star`` via the error recursion.

    The error ``X^M - x*`` equals ``-(K^{-1} eps B)^{M+1} x*`` where
    ``x* = S^{-1} ell``.
    """
    ell = sys.S @ np.asarray(x_star, dtype=np.float64)
    xs = gauss_solve(sys.S, ell)
    e = xs.copy()
    for _ in range(M + 1):
        e = dense_qr_solve(sys, sys.eps * sys.B @ e)
    return xs - e
