"""A random walk model: bulk coin, reference permutation and phase law."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coins import CoinPermutation, check_unitary, coin_distance, hadamard_coin, perturbed_coin, permutation_coin
from .disorder import PhaseDistribution, PhaseField, sample_phases, zero_phases
from .walk import WalkOperator, build_collared, collared_window, invariant_restriction


@dataclass(frozen=True, eq=False)
class WalkModel:
    coin: np.ndarray
    pi: CoinPermutation
    dist: PhaseDistribution = field(default_factory=PhaseDistribution.uniform)

    def __post_init__(self):
        object.__setattr__(self, "coin", check_unitary(self.coin))
        if self.coin.shape[0] != 2 * self.pi.d:
            raise ValueError("coin size does not match permutation dimension")

    @property
    def d(self) -> int:
        return self.pi.d

    @property
    def delta(self) -> float:
        return coin_distance(self.coin, self.pi)

    @property
    def is_localized_reference(self) -> bool:
        return bool(np.array_equal(self.coin, permutation_coin(self.pi)))

    @classmethod
    def near_permutation(cls, d: int, delta: float, seed: int = 0, dist=None, pi=None) -> "WalkModel":
        pi = pi or CoinPermutation.standard_cycle(d)
        return cls(perturbed_coin(pi, delta, seed), pi, dist or PhaseDistribution.uniform())

    @classmethod
    def localized(cls, d: int, dist=None, pi=None) -> "WalkModel":
        pi = pi or CoinPermutation.standard_cycle(d)
        return cls(permutation_coin(pi), pi, dist or PhaseDistribution.uniform())

    @classmethod
    def hadamard(cls, dist=None) -> "WalkModel":
        return cls(hadamard_coin(), CoinPermutation.standard_cycle(1), dist or PhaseDistribution.zero())

    def phases(self, L: int, seed: int, stream=()) -> PhaseField:
        region = collared_window(L, self.d)
        if self.dist.kind == "zero":
            return zero_phases(region)
        return sample_phases(region, self.dist, seed, stream)

    def collared(self, L: int, seed: int, stream=()) -> WalkOperator:
        return build_collared(self.coin, self.phases(L, seed, stream), L, self.pi)

    def restricted(self, L: int, seed: int, stream=()) -> WalkOperator:
        """Finite-volume unitary ``U^Lambda_omega(C)`` for realization ``stream``."""
        return invariant_restriction(self.collared(L, seed, stream), L)

    def describe(self) -> dict:
        return {
            "d": self.d,
            "pi": self.pi.to_json(),
            "delta": self.delta,
            "coin": [[[float(v.real), float(v.imag)] for v in row] for row in self.coin],
            "distribution": self.dist.to_json(),
        }
