"""Random test systems and checks of the iteration estimates.

The checks here are shared by the abstract demo runner and the test suite.
Every random system is realistic in the sense that its load comes from a
genuine least-squares problem: ``A`` is ``m x N`` with ``m > N``,
``S = A^T A``, ``ell = A^T y`` and ``c = |y|^2``.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .core import (DiscreteSystem, FixedIterations, LoadData, factorize_system,
                   residual_norm, run_iterated, seminorm_b)

#: Relative slack for strict inequalities.
SLACK = 1e-12


@dataclass(frozen=True)
class RandomProblem:
    A: np.ndarray
    y: np.ndarray
    B: np.ndarray
    eps: float
    x_s: Optional[np.ndarray] = None

    @property
    def S(self):
        return self.A.T @ self.A

    def system(self, eps=None) -> DiscreteSystem:
        return DiscreteSystem(_sym(self.S), _sym(self.B), self.eps if eps is None else eps)

    def load(self, delta=None) -> LoadData:
        return LoadData(self.A.T @ self.y, float(self.y @ self.y), delta)


def _sym(m):
    return 0.5 * (m + m.T)


def random_problem(rng: np.random.Generator, n: int, eps: float = 1.0,
                   admissible: bool = False, b_rank: Optional[int] = None) -> RandomProblem:
    """Draw ``A`` (``(n + 3) x n``), ``y`` and a PSD ``B`` of rank ``b_rank`` (default ``n``).

    With ``admissible`` the data is ``y = A x_s`` for a random ``x_s``.
    """
    m = n + 3
    A = rng.standard_normal((m, n))
    k = n if b_rank is None else b_rank
    C = rng.standard_normal((k, n))
    B = C.T @ C / max(k, 1)
    if admissible:
        x_s = rng.standard_normal(n)
        return RandomProblem(A, A @ x_s, B, eps, x_s)
    return RandomProblem(A, rng.standard_normal(m), B, eps)


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float = 0.0

    def merge(self, ok: bool, margin: float):
        self.passed = self.passed and ok
        self.worst = max(self.worst, margin)


@dataclass
class EstimateReport:
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)


ESTIMATES = ("b_growth", "range_bound", "residual_bound", "residual_decrease",
             "growth_bound", "error_decrease")


def check_estimates(sys: DiscreteSystem, load: LoadData, M: int, x_s=None,
                    operator=None, slack: float = SLACK) -> EstimateReport:
    """Verify the iteration estimates on ``X^0 .. X^M``.

    A strict inequality ``lhs < rhs`` is accepted when
    ``lhs < rhs + slack * scale``, where ``scale`` is ``sqrt(c)`` for the
    data-space quantities, ``|X^M|_b`` for the seminorm growth and
    ``|x_s|_b`` for the error. Below that level strictness is not
    observable in floating point. ``worst`` holds the largest
    ``(lhs - rhs) / scale``.

    Parameters
    ----------
    operator : tuple (A, y), optional
        When given, ``|A X - y|`` and ``|A X|`` are evaluated directly
        instead of through the quadratic form, which loses half the digits
        once the residual is small.
    """
    res = {k: CheckResult(k, True, -math.inf) for k in ESTIMATES}
    f = factorize_system(sys)
    iterates = []
    run_iterated(f, sys, load, FixedIterations(M), callback=lambda row, x: iterates.append(x.copy()))
    sqc = math.sqrt(load.c)

    def strict(name, lhs, rhs, scale):
        margin = (lhs - rhs) / scale if scale > 0 else lhs - rhs
        res[name].merge(margin < slack, margin)

    e_scale = None if x_s is None else seminorm_b(sys, x_s)
    prev_b = prev_r = prev_e = None
    for k, x in enumerate(iterates):
        b = seminorm_b(sys, x)
        if operator is None:
            r = residual_norm(sys, load, x)
            ax = math.sqrt(max(0.0, float(x @ sys.S.full @ x)))
        else:
            A, y = operator
            r = float(np.linalg.norm(A @ x - y))
            ax = float(np.linalg.norm(A @ x))
        strict("range_bound", ax, sqc, sqc)
        strict("residual_bound", r, sqc, sqc)
        g = math.sqrt(2 * (k + 1) / sys.eps) * sqc
        strict("growth_bound", b, g, g)
        if prev_b is not None:
            strict("b_growth", prev_b, b, b)
            strict("residual_decrease", r, prev_r, sqc)
        if x_s is not None:
            e = seminorm_b(sys, x - x_s)
            if prev_e is not None:
                strict("error_decrease", e, prev_e, e_scale)
            prev_e = e
        prev_b, prev_r = b, r
    if x_s is None:
        del res["error_decrease"]
    return EstimateReport(list(res.values()))
