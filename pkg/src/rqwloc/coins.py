"""Coin matrices: permutation coins, perturbations and the d=1 (t, r) family."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .lattice import check_coin, check_dim, coin_indices, coin_position

UNITARY_TOL = 1e-10


class CoinError(ValueError):
    pass


def unitarity_defect(M: np.ndarray) -> float:
    """Operator norm of ``M^* M - I``."""
    M = np.asarray(M)
    return float(np.linalg.norm(M.conj().T @ M - np.eye(M.shape[1]), 2))


def check_unitary(M: np.ndarray, tol: float = UNITARY_TOL) -> np.ndarray:
    M = np.asarray(M, dtype=np.complex128)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise CoinError(f"coin must be square, got shape {M.shape}")
    err = unitarity_defect(M)
    if err > tol:
        raise CoinError(f"coin is not unitary: ||C*C - I|| = {err:.3e}")
    return M


@dataclass(frozen=True)
class CoinPermutation:
    """Permutation of ``I_pm`` stored as ``{tau: pi(tau)}``."""

    d: int
    mapping: tuple[tuple[int, int], ...]

    def __post_init__(self):
        check_dim(self.d)
        m = dict(self.mapping)
        idx = set(coin_indices(self.d))
        if set(m) != idx or set(m.values()) != idx:
            raise CoinError(f"not a permutation of I_pm for d={self.d}: {m}")
        object.__setattr__(self, "mapping", tuple(sorted(m.items(), key=lambda kv: coin_position(kv[0], self.d))))

    @classmethod
    def from_dict(cls, d: int, m: dict[int, int]) -> "CoinPermutation":
        return cls(d, tuple(m.items()))

    @classmethod
    def from_cycle(cls, d: int, cycle) -> "CoinPermutation":
        """Build from one cycle ``(a, b, c, ...)`` meaning ``a -> b -> c -> ... -> a``.

        Coin indices absent from the cycle are fixed points.
        """
        cycle = [check_coin(t, d) for t in cycle]
        if len(set(cycle)) != len(cycle):
            raise CoinError(f"repeated entry in cycle {cycle}")
        m = {t: t for t in coin_indices(d)}
        for a, b in zip(cycle, cycle[1:] + cycle[:1]):
            m[a] = b
        return cls.from_dict(d, m)

    @classmethod
    def identity(cls, d: int) -> "CoinPermutation":
        return cls.from_dict(d, {t: t for t in coin_indices(d)})

    @classmethod
    def standard_cycle(cls, d: int) -> "CoinPermutation":
        """Full cycle ``+1 -> -1 -> +2 -> -2 -> ... -> -d -> +1``."""
        return cls.from_cycle(d, list(coin_indices(d)))

    def __call__(self, tau: int) -> int:
        return dict(self.mapping)[tau]

    def inverse(self) -> "CoinPermutation":
        return CoinPermutation.from_dict(self.d, {b: a for a, b in self.mapping})

    @cached_property
    def cycles(self) -> tuple[tuple[int, ...], ...]:
        m = dict(self.mapping)
        seen: set[int] = set()
        out = []
        for t in coin_indices(self.d):
            if t in seen:
                continue
            cyc = [t]
            seen.add(t)
            nxt = m[t]
            while nxt != t:
                cyc.append(nxt)
                seen.add(nxt)
                nxt = m[nxt]
            out.append(tuple(cyc))
        return tuple(out)

    @property
    def is_full_cycle(self) -> bool:
        return len(self.cycles) == 1

    def to_json(self) -> dict:
        return {"d": self.d, "map": {str(a): b for a, b in self.mapping}}

    @classmethod
    def from_json(cls, obj: dict) -> "CoinPermutation":
        return cls.from_dict(int(obj["d"]), {int(a): int(b) for a, b in obj["map"].items()})


def permutation_coin(pi: CoinPermutation) -> np.ndarray:
    """``C_pi = sum_tau |pi(tau)><tau|`` in storage order."""
    n = 2 * pi.d
    C = np.zeros((n, n), dtype=np.complex128)
    for tau, img in pi.mapping:
        C[coin_position(img, pi.d), coin_position(tau, pi.d)] = 1.0
    return C


def coin_distance(C: np.ndarray, pi: CoinPermutation) -> float:
    """Operator norm ``||C - C_pi||`` (largest singular value)."""
    Cp = permutation_coin(pi)
    C = np.asarray(C)
    if C.shape != Cp.shape:
        raise CoinError(f"coin shape {C.shape} does not match 2d = {Cp.shape[0]}")
    return float(np.linalg.norm(C - Cp, 2))


def tr_coin(t: float, r: float) -> np.ndarray:
    """The d=1 family ``[[t, r], [r, -t]]`` with ``t**2 + r**2 = 1``."""
    if abs(t * t + r * r - 1.0) > 1e-12:
        raise CoinError(f"t^2 + r^2 must equal 1, got {t * t + r * r!r}")
    return np.array([[t, r], [r, -t]], dtype=np.complex128)


def hadamard_coin() -> np.ndarray:
    s = 1.0 / np.sqrt(2.0)
    return tr_coin(s, s)


def random_hermitian_unit(n: int, rng: np.random.Generator) -> np.ndarray:
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    H = 0.5 * (A + A.conj().T)
    return H / np.linalg.norm(H, 2)


def perturbed_coin(pi: CoinPermutation, delta: float, rng: np.random.Generator | int | None = None) -> np.ndarray:
    """Random unitary ``C = C_pi exp(i s H)`` with ``||C - C_pi|| = delta`` exactly.

    ``H`` is Hermitian with unit operator norm, so ``||C - C_pi|| =
    max_k |exp(i s h_k) - 1| = 2 sin(s / 2)`` for ``0 <= s <= pi``; the
    amplitude ``s`` is solved in closed form and the result re-checked.
    """
    if not 0.0 <= delta <= 2.0:
        raise CoinError(f"delta must lie in [0, 2], got {delta}")
    Cp = permutation_coin(pi)
    if delta == 0.0:
        return Cp
    rng = np.random.default_rng(rng)
    H = random_hermitian_unit(Cp.shape[0], rng)
    s = 2.0 * np.arcsin(delta / 2.0)
    w, V = np.linalg.eigh(H)
    C = Cp @ (V @ np.diag(np.exp(1j * s * w)) @ V.conj().T)
    got = coin_distance(C, pi)
    if abs(got - delta) > 1e-10:  # pragma: no cover - guarded by construction
        raise CoinError(f"perturbation landed at {got}, wanted {delta}")
    return check_unitary(C)
