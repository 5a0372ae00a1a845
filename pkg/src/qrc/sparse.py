"""Sparse symmetric storage and a square-root-free Cholesky (LDL^T) solver.

Only the upper triangle (diagonal included) is stored. Assembly goes
through :class:`TripletList`; lower-triangle contributions are mirrored
into the upper triangle, so the represented matrix is symmetric by
construction rather than by post-hoc averaging.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.sparse.csgraph import connected_components, reverse_cuthill_mckee, shortest_path

from . import _ldl
from .errors import DimensionMismatch, IndexOutOfRange, NotPositiveDefinite

PIVOT_TOL = 1e-14


class TripletList:
    """Growable list of ``(row, col, value)`` contributions.

    Duplicates are allowed and summed by :func:`triplets_to_sym`. A triplet
    ``(i, j, v)`` with ``i != j`` sets both mirrored entries, so callers add
    each off-diagonal pair once.
    """

    def __init__(self, n):
        self.n = int(n)
        self._rows = []
        self._cols = []
        self._vals = []

    def add(self, i, j, v):
        self._rows.append(np.atleast_1d(np.asarray(i, dtype=np.int64)))
        self._cols.append(np.atleast_1d(np.asarray(j, dtype=np.int64)))
        self._vals.append(np.atleast_1d(np.asarray(v, dtype=np.float64)))

    def add_block(self, dofs, local):
        """Scatter symmetric local matrices.

        ``dofs`` has shape ``(ne, k)`` and ``local`` shape ``(ne, k, k)``
        (or ``(k, k)``, broadcast over elements). Only the local upper
        triangle is read: a triplet stands for both ``(i, j)`` and ``(j, i)``.
        """
        dofs = np.asarray(dofs, dtype=np.int64)
        ne, k = dofs.shape
        local = np.broadcast_to(np.asarray(local, dtype=np.float64), (ne, k, k))
        a, b = np.triu_indices(k)
        self.add(dofs[:, a].ravel(), dofs[:, b].ravel(), local[:, a, b].ravel())

    def arrays(self):
        if not self._rows:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty.copy(), np.zeros(0)
        return (np.concatenate(self._rows), np.concatenate(self._cols),
                np.concatenate(self._vals))

    def __len__(self):
        return sum(len(r) for r in self._rows)


@dataclass(frozen=True)
class SymSparse:
    """Upper triangle (with diagonal) of a symmetric matrix in CSR form.

    Within each row, column indices are sorted and never smaller than the
    row index.
    """

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    n: int
    _upper: sps.csr_matrix = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        for name in ("indptr", "indices", "data"):
            getattr(self, name).setflags(write=False)
        if self._upper is None:
            upper = sps.csr_matrix((self.data, self.indices, self.indptr),
                                   shape=(self.n, self.n))
            object.__setattr__(self, "_upper", upper)

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def nnz(self):
        return len(self.data)

    def diagonal(self):
        return self._upper.diagonal()

    def to_scipy(self):
        """Full symmetric matrix as a ``scipy.sparse.csr_matrix``."""
        u = self._upper
        return (u + sps.triu(u, k=1).T).tocsr()

    @property
    def full(self):
        """Cached full-storage copy used for fast products (read-only use)."""
        f = self.__dict__.get("_full_cache")
        if f is None:
            f = self.to_scipy()
            object.__setattr__(self, "_full_cache", f)
        return f

    def todense(self):
        return self.to_scipy().toarray()

    def __add__(self, other):
        return _from_upper(self._upper + other._upper)

    def scaled(self, alpha):
        return SymSparse(self.indptr.copy(), self.indices.copy(),
                         alpha * self.data, self.n)

    @classmethod
    def from_dense(cls, a):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got {a.shape}")
        return _from_upper(sps.csr_matrix(np.triu(a)))


def _from_upper(u):
    u = sps.csr_matrix(u)
    u.sum_duplicates()
    u.sort_indices()
    return SymSparse(u.indptr.astype(np.int64), u.indices.astype(np.int64),
                     u.data.astype(np.float64), u.shape[0])


def triplets_to_sym(t: TripletList) -> SymSparse:
    """Sum duplicates and fold lower-triangle entries into the upper triangle."""
    rows, cols, vals = t.arrays()
    n = t.n
    if len(rows) and (rows.min() < 0 or cols.min() < 0
                      or rows.max() >= n or cols.max() >= n):
        raise IndexOutOfRange(f"triplet index outside [0, {n})")
    r = np.minimum(rows, cols)
    c = np.maximum(rows, cols)
    u = sps.coo_matrix((vals, (r, c)), shape=(n, n)).tocsr()
    return _from_upper(u)


def _check_vec(m, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.n,):
        raise DimensionMismatch(f"vector of shape {x.shape} for a {m.n}x{m.n} matrix")
    return x


def matvec(m: SymSparse, x):
    x = _check_vec(m, x)
    return m.full @ x


def quad_form(m: SymSparse, x):
    """``x^T M x`` touching each stored off-diagonal entry once."""
    x = _check_vec(m, x)
    d = m.diagonal()
    return float(2.0 * (x @ (m._upper @ x)) - d @ (x * x))


@dataclass(frozen=True)
class FactorHandle:
    """``P M P^T = L D L^T`` with ``L`` unit lower triangular.

    ``perm[k]`` is the original index placed at position ``k``.
    """

    perm: np.ndarray
    Lp: np.ndarray
    Li: np.ndarray
    Lx: np.ndarray
    D: np.ndarray
    n: int

    def __post_init__(self):
        for name in ("perm", "Lp", "Li", "Lx", "D"):
            getattr(self, name).setflags(write=False)

    @property
    def nnz_l(self):
        return int(self.Lp[-1])

    def L_dense(self):
        L = np.eye(self.n)
        for j in range(self.n):
            for p in range(self.Lp[j], self.Lp[j + 1]):
                L[self.Li[p], j] = self.Lx[p]
        return L

    def solve(self, rhs):
        return solve_rhs(self, rhs)


def _pattern(m: SymSparse):
    p = sps.csr_matrix((np.ones(m.nnz), m.indices, m.indptr), shape=m.shape)
    return (p + p.T).tocsr()


def _bfs_levels(g, start):
    return shortest_path(g, method="D", unweighted=True, indices=start).astype(np.int64)


def nested_dissection(pattern, leaf_size=64):
    """Nested dissection with breadth-first level-set separators.

    Each connected piece is rooted at a pseudo-peripheral vertex; the level
    set splitting it into halves becomes the separator and is numbered after
    both halves. Pieces of at most ``leaf_size`` vertices are ordered by
    reverse Cuthill-McKee.
    """
    pattern = sps.csr_matrix(pattern)
    order = []
    stack = [(np.arange(pattern.shape[0], dtype=np.int64), None)]
    # Explicit stack: an entry with a separator payload is emitted when popped.
    while stack:
        idx, sep = stack.pop()
        if sep is not None:
            order.append(sep)
            continue
        sub = pattern[idx][:, idx]
        if len(idx) <= leaf_size:
            order.append(idx[reverse_cuthill_mckee(sub, symmetric_mode=True)])
            continue
        ncomp, label = connected_components(sub, directed=False)
        if ncomp > 1:
            for c in range(ncomp - 1, -1, -1):
                stack.append((idx[label == c], None))
            continue
        level = _bfs_levels(sub, 0)
        for _ in range(2):
            cand = _bfs_levels(sub, int(np.argmax(level)))
            if cand.max() <= level.max():
                break
            level = cand
        depth = int(level.max())
        if depth < 2:
            order.append(idx[reverse_cuthill_mckee(sub, symmetric_mode=True)])
            continue
        cum = np.cumsum(np.bincount(level))
        mid = int(np.searchsorted(cum, len(idx) / 2))
        mid = min(max(mid, 1), depth - 1)
        stack.append((None, idx[level == mid]))
        stack.append((idx[level > mid], None))
        stack.append((idx[level < mid], None))
    return np.concatenate(order) if order else np.zeros(0, dtype=np.int64)


def fill_reducing_order(m: SymSparse, method="nd"):
    """Symmetric permutation computed from the sparsity pattern alone.

    ``method`` is ``"nd"`` (nested dissection), ``"rcm"`` (reverse
    Cuthill-McKee) or ``"natural"``.
    """
    if method == "natural":
        return np.arange(m.n, dtype=np.int64)
    pattern = _pattern(m)
    if method == "rcm":
        return np.asarray(reverse_cuthill_mckee(pattern, symmetric_mode=True), dtype=np.int64)
    if method == "nd":
        return nested_dissection(pattern)
    raise ValueError(f"unknown ordering {method!r}")


def factor_spd(m: SymSparse, perm=None, pivot_tol=PIVOT_TOL) -> FactorHandle:
    """LDL^T factorization of a symmetric positive-definite matrix.

    Parameters
    ----------
    m : SymSparse
        Matrix to factor.
    perm : array of int, optional
        Symmetric permutation. ``None`` uses :func:`fill_reducing_order`;
        pass ``np.arange(n)`` for the natural order.
    pivot_tol : float
        A pivot ``D_k`` is rejected unless ``D_k > pivot_tol * |M_kk|``.

    Raises
    ------
    NotPositiveDefinite
        With the (original, unpermuted) index of the failing pivot.
    """
    n = m.n
    if perm is None:
        perm = fill_reducing_order(m)
    perm = np.asarray(perm, dtype=np.int64)
    full = m.to_scipy()
    permuted = full[perm][:, perm]
    upper_csc = sps.triu(permuted).tocsc()
    upper_csc.sort_indices()
    Ap = upper_csc.indptr.astype(np.int64)
    Ai = upper_csc.indices.astype(np.int64)
    Ax = upper_csc.data.astype(np.float64)
    parent, Lp = _ldl.symbolic(n, Ap, Ai)
    Li, Lx, D, bad = _ldl.numeric(n, Ap, Ai, Ax, Lp, parent, pivot_tol)
    if bad >= 0:
        raise NotPositiveDefinite(perm[bad], float(D[bad]))
    return FactorHandle(perm, Lp, Li, Lx, D, n)


def solve_rhs(f: FactorHandle, rhs):
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape != (f.n,):
        raise DimensionMismatch(f"rhs of shape {rhs.shape} for a factor of order {f.n}")
    x = rhs[f.perm].copy()
    _ldl.solve_inplace(f.n, f.Lp, f.Li, f.Lx, f.D, x)
    out = np.empty_like(x)
    out[f.perm] = x
    return out
