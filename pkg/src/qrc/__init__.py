"""Iterated quasi-reversibility for data-completion problems.

The package exposes a discretization-agnostic iteration engine
(:mod:`qrc.core`) on top of a sparse LDL^T factorization
(:mod:`qrc.sparse`), plus two finite element instantiations: the lateral
Cauchy problem for the 1D heat equation (:mod:`qrc.heat`) and the elliptic
Cauchy problem with Robin-coefficient recovery on an annulus
(:mod:`qrc.mesh`, :mod:`qrc.elliptic`).
"""

__version__ = "0.1.0"

from .core import (DiscreteSystem, FixedIterations, IterationTrace, LoadData, Morozov,
                   ResidualFloor, StopReason, derivative_sequence, epsilon_sweep,
                   factorize_system, norm_ab, residual_norm, run_iterated, seminorm_b,
                   solve_single_qr)
from .errors import QRError

__all__ = [
    "DiscreteSystem", "FixedIterations", "IterationTrace", "LoadData", "Morozov",
    "ResidualFloor", "StopReason", "derivative_sequence", "epsilon_sweep", "factorize_system",
    "norm_ab", "residual_norm", "run_iterated", "seminorm_b", "solve_single_qr", "QRError",
]
