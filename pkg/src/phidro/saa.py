"""Sampling from finite nominal measures and sample average approximation estimators.

Random draws come from a Philox counter-based stream keyed by ``seed``.
Trial ``t`` starts at counter offset ``t * n``, so any trial can be replayed
in isolation and parallel runs reproduce serial runs exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Any

import numpy as np

from .divergence import DivergenceSpec, Growth, growth_inverse
from .risk import DEFAULT_TOL, FiniteInstance, primal_value, truncated_risk

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Counts of sampled atoms, keyed by index into the source instance."""

    indices: tuple[int, ...]
    counts: tuple[int, ...]
    values: tuple[float, ...]
    n: int
    seed: int
    trial: int

    def __post_init__(self) -> None:
        if sum(self.counts) != self.n:
            raise ValueError("counts must sum to n")
        if min(self.counts, default=1) <= 0:
            raise ValueError("counts must be positive")

    @property
    def weights(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(c, self.n) for c in self.counts)

    def mean(self) -> float:
        return math.fsum(c * v for c, v in zip(self.counts, self.values)) / self.n

    def to_instance(self, inst: FiniteInstance) -> FiniteInstance:
        """The nominal instance with P replaced by the empirical weights."""
        return FiniteInstance(self.values, tuple(c / self.n for c in self.counts), inst.B, inst.tau, inst.spec)

    def to_dict(self) -> dict[str, Any]:
        return {
            "atoms": [{"index": i, "x": v, "count": c} for i, v, c in zip(self.indices, self.values, self.counts)],
            "n": self.n,
            "seed": self.seed,
            "trial": self.trial,
        }


def _stream(seed: int, trial: int, n: int) -> np.random.Generator:
    counter = trial * n
    bitgen = np.random.Philox(key=seed & _SEED_MASK, counter=[counter & _SEED_MASK, counter >> 64, 0, 0])
    return np.random.Generator(bitgen)


def draw_empirical(inst: FiniteInstance, n: int, seed: int = 0, trial: int = 0) -> EmpiricalMeasure:
    """Draw ``n`` i.i.d. atoms by inverse CDF and deduplicate them by atom index."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if trial < 0:
        raise ValueError("trial must be >= 0")
    p = np.asarray(inst.p)
    cdf = np.cumsum(p)
    last = int(np.flatnonzero(p > 0.0)[-1])
    cdf[last:] = 1.0
    u = _stream(seed, trial, n).random(n)
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), last)
    counts = np.bincount(idx, minlength=len(p))
    hit = np.flatnonzero(counts)
    return EmpiricalMeasure(
        tuple(int(i) for i in hit),
        tuple(int(counts[i]) for i in hit),
        tuple(inst.x[i] for i in hit),
        n,
        seed,
        trial,
    )


def saa_estimate(emp: EmpiricalMeasure, inst: FiniteInstance, tol: float = DEFAULT_TOL) -> float:
    """R_n(X): the worst-case expectation under the empirical measure."""
    return primal_value(emp.to_instance(inst))


def truncated_saa_estimate(emp: EmpiricalMeasure, inst: FiniteInstance, L: float, tol: float = DEFAULT_TOL) -> float:
    """R_{n,L}(X): the truncated worst case under the empirical measure."""
    return truncated_risk(emp.to_instance(inst), L, tol)


class TruncationMode(str, Enum):
    SANDWICH = "sandwich"
    THEOREM_RATE = "theorem_rate"


def truncation_level(spec: DivergenceSpec, B: float, tau: float, eps: float, mode: TruncationMode | str = TruncationMode.SANDWICH) -> float:
    """Density cap L making the truncated risk eps-accurate.

    ``sandwich`` gives ``g^{-1}(2*B*tau/eps)``, which guarantees
    ``R - eps <= R_L <= R``; ``theorem_rate`` gives ``g^{-1}(32*B*tau/eps)``,
    the level used by the sample-size formulas.
    """
    mode = TruncationMode(mode)
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if spec.growth_class is Growth.SUBLINEAR:
        raise ValueError(f"truncation levels need a superlinear or indicator divergence, got {spec.label}")
    factor = 2.0 if mode is TruncationMode.SANDWICH else 32.0
    arg = factor * B * tau / eps
    if arg <= 0.0:
        return 1.0
    return growth_inverse(spec, arg)
