"""Numba kernels for the up-looking sparse LDL^T factorization.

All routines work on the upper triangle of a symmetric matrix stored in
compressed-column form (column ``k`` lists rows ``i <= k``). The factor ``L``
is unit lower triangular and stored column-wise without its diagonal.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def symbolic(n, Ap, Ai):
    parent = np.empty(n, dtype=np.int64)
    lnz = np.zeros(n, dtype=np.int64)
    flag = np.empty(n, dtype=np.int64)
    for k in range(n):
        parent[k] = -1
        flag[k] = k
        for p in range(Ap[k], Ap[k + 1]):
            i = Ai[p]
            if i < k:
                while flag[i] != k:
                    if parent[i] == -1:
                        parent[i] = k
                    lnz[i] += 1
                    flag[i] = k
                    i = parent[i]
    Lp = np.zeros(n + 1, dtype=np.int64)
    for k in range(n):
        Lp[k + 1] = Lp[k] + lnz[k]
    return parent, Lp


@njit(cache=True)
def numeric(n, Ap, Ai, Ax, Lp, parent, pivot_tol):
    """Return ``(Li, Lx, D, bad)``; ``bad`` is the first failing pivot or -1."""
    nnz = Lp[n]
    Li = np.empty(nnz, dtype=np.int64)
    Lx = np.empty(nnz, dtype=np.float64)
    D = np.zeros(n, dtype=np.float64)
    Y = np.zeros(n, dtype=np.float64)
    pattern = np.empty(n, dtype=np.int64)
    flag = np.empty(n, dtype=np.int64)
    lnz = np.zeros(n, dtype=np.int64)
    for k in range(n):
        top = n
        flag[k] = k
        Y[k] = 0.0
        akk = 0.0
        for p in range(Ap[k], Ap[k + 1]):
            i = Ai[p]
            if i > k:
                continue
            Y[i] += Ax[p]
            if i == k:
                akk += Ax[p]
            length = 0
            while flag[i] != k:
                pattern[length] = i
                length += 1
                flag[i] = k
                i = parent[i]
            while length > 0:
                top -= 1
                length -= 1
                pattern[top] = pattern[length]
        dk = Y[k]
        Y[k] = 0.0
        for t in range(top, n):
            i = pattern[t]
            yi = Y[i]
            Y[i] = 0.0
            p2 = Lp[i] + lnz[i]
            for p in range(Lp[i], p2):
                Y[Li[p]] -= Lx[p] * yi
            lki = yi / D[i]
            dk -= lki * yi
            Li[p2] = k
            Lx[p2] = lki
            lnz[i] += 1
        if not dk > pivot_tol * abs(akk):
            D[k] = dk
            return Li, Lx, D, k
        D[k] = dk
    return Li, Lx, D, -1


@njit(cache=True)
def solve_inplace(n, Lp, Li, Lx, D, x):
    for j in range(n):
        xj = x[j]
        for p in range(Lp[j], Lp[j + 1]):
            x[Li[p]] -= Lx[p] * xj
    for j in range(n):
        x[j] /= D[j]
    for j in range(n - 1, -1, -1):
        s = x[j]
        for p in range(Lp[j], Lp[j + 1]):
            s -= Lx[p] * x[Li[p]]
        x[j] = s
