"""Seeded Gaussian noise with exact relative L-infinity amplitude.

Reproducibility does not rely on any library generator. Variates come
from SplitMix64 (state increment ``0x9E3779B97F4A7C15``, output mix
multipliers ``0xBF58476D1CE4E5B9`` and ``0x94D049BB133111EB`` with shifts
30, 27, 31). Each 64-bit output ``z`` becomes a uniform ``u = ((z >> 11) + 1)
* 2**-53`` in ``(0, 1]``; consecutive pairs ``(u1, u2)`` give two standard
normals by Box-Muller, ``sqrt(-2 ln u1) * (cos 2 pi u2, sin 2 pi u2)``, used
in that order. A length-``n`` draw consumes ``2 * ceil(n / 2)`` outputs.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, InvalidSystem, ZeroSignal

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


class SplitMix64:
    """Counter-based 64-bit generator; state advances by a fixed odd constant."""

    def __init__(self, seed: int):
        self.state = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)

    def next_u64(self, n: int) -> np.ndarray:
        k = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = self.state + k * _GOLDEN
            self.state = self.state + np.uint64(n) * _GOLDEN
            z = (z ^ (z >> np.uint64(30))) * _MIX1
            z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))

    def uniform(self, n: int) -> np.ndarray:
        z = self.next_u64(n)
        return ((z >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53

    def normal(self, n: int) -> np.ndarray:
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        rad = np.sqrt(-2.0 * np.log(u[:, 0]))
        ang = 2.0 * np.pi * u[:, 1]
        return np.column_stack([rad * np.cos(ang), rad * np.sin(ang)]).ravel()[:n]


@dataclass(frozen=True)
class NoiseSpec:
    alpha: float
    seed: int = 0

    def __post_init__(self):
        if not self.alpha >= 0:
            raise InvalidSystem(f"alpha must be nonnegative, got {self.alpha}")


@dataclass(frozen=True)
class NoisySignal:
    clean: np.ndarray
    noisy: np.ndarray
    delta_l2: Optional[float] = None

    @property
    def perturbation(self):
        return self.noisy - self.clean


def corrupt_linf(clean, spec: NoiseSpec, rng: Optional[SplitMix64] = None) -> NoisySignal:
    """Add Gaussian noise rescaled so ``max|noisy - clean| = alpha max|clean|``.

    ``rng`` lets several signals share one stream (they are corrupted in call
    order); by default a fresh stream is seeded from ``spec.seed``.
    """
    clean = np.array(clean, dtype=np.float64).ravel()
    if clean.size == 0:
        raise InvalidSystem("cannot corrupt an empty signal")
    if rng is None:
        rng = SplitMix64(spec.seed)
    draw = rng.normal(clean.size)
    if spec.alpha == 0:
        return NoisySignal(clean, clean.copy())
    peak = np.max(np.abs(clean))
    if peak == 0:
        raise ZeroSignal("relative noise on an identically zero signal")
    s = spec.alpha * peak / np.max(np.abs(draw))
    return NoisySignal(clean, clean + s * draw)


def l2_delta(perturbations, weights):
    """Combined L2 size ``sqrt(sum_k d_k^T W_k d_k)`` of several perturbations.

    Each ``W_k`` is either a vector of quadrature weights or a (dense or
    scipy sparse) mass matrix of the representation the signal lives in.
    """
    if len(perturbations) != len(weights):
        raise DimensionMismatch("one weight set per perturbation is required")
    total = 0.0
    for d, w in zip(perturbations, weights):
        d = np.asarray(d, dtype=np.float64).ravel()
        if np.ndim(w) == 1 and not hasattr(w, "tocsr"):
            w = np.asarray(w, dtype=np.float64)
            if w.shape != d.shape:
                raise DimensionMismatch(f"weights {w.shape} vs signal {d.shape}")
            total += float(np.sum(w * d * d))
        else:
            if w.shape != (d.size, d.size):
                raise DimensionMismatch(f"mass matrix {w.shape} vs signal {d.shape}")
            total += float(d @ (w @ d))
    return float(np.sqrt(max(total, 0.0)))
