"""Lattice geometry: coin indices, jumps, sup-norm cubes and basis indexing.

Conventions used throughout the package:

* coin indices ``tau`` take values in ``{+1, -1, +2, -2, ..., +d, -d}`` and are
  stored in that order; position ``c`` holds ``tau = (c // 2 + 1) * (+1, -1)[c % 2]``;
* sites of a cube are ordered lexicographically on their coordinates;
* the flat index of ``|tau, x>`` is ``site_position * 2d + coin_position``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

SUPPORTED_DIMS = (1, 2, 3)


class LatticeError(ValueError):
    """Invalid lattice object (coin index, site, dimension)."""


class OutOfRegionError(LatticeError, IndexError):
    """A basis label refers to a site outside the region."""


def check_dim(d: int) -> int:
    if int(d) != d or d < 1:
        raise LatticeError(f"dimension must be a positive integer, got {d!r}")
    return int(d)


def coin_indices(d: int) -> tuple[int, ...]:
    """Return ``I_pm`` in storage order ``(+1, -1, +2, -2, ...)``."""
    d = check_dim(d)
    return tuple(s * k for k in range(1, d + 1) for s in (1, -1))


def coin_position(tau: int, d: int) -> int:
    check_coin(tau, d)
    return 2 * (abs(tau) - 1) + (0 if tau > 0 else 1)


def coin_from_position(c: int, d: int) -> int:
    if not 0 <= c < 2 * d:
        raise LatticeError(f"coin position {c} out of range for d={d}")
    return (c // 2 + 1) * (1 if c % 2 == 0 else -1)


def check_coin(tau: int, d: int) -> int:
    if int(tau) != tau or tau == 0 or abs(tau) > d:
        raise LatticeError(f"coin index {tau!r} not in I_pm for d={d}")
    return int(tau)


def jump(tau: int, d: int) -> tuple[int, ...]:
    """Unit displacement ``sign(tau) * e_|tau|`` attached to coin state ``tau``."""
    check_coin(tau, check_dim(d))
    out = [0] * d
    out[abs(tau) - 1] = 1 if tau > 0 else -1
    return tuple(out)


def jump_table(d: int) -> np.ndarray:
    """Array of shape ``(2d, d)``: row ``c`` is the jump of the coin at position ``c``."""
    return np.array([jump(t, d) for t in coin_indices(d)], dtype=np.int64)


def sup_norm(x) -> int:
    a = np.asarray(x, dtype=np.int64)
    if a.size == 0:
        return 0
    return int(np.max(np.abs(a)))


def cube_sites(L: int, d: int) -> list[tuple[int, ...]]:
    """All sites with ``sup_norm <= L``, lexicographically ordered."""
    if L < 0:
        raise LatticeError(f"cube radius must be >= 0, got {L}")
    d = check_dim(d)
    return list(itertools.product(range(-L, L + 1), repeat=d))


@dataclass(frozen=True)
class BasisLabel:
    coin: int
    site: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "site", tuple(int(v) for v in self.site))
        check_coin(self.coin, len(self.site))


@dataclass(frozen=True)
class CubeRegion:
    """Sup-norm cube of radius ``radius`` in ``d`` dimensions.

    With ``periodic=True`` the cube is treated as a discrete torus of side
    ``2*radius + 1``, so jumps leaving one face re-enter at the opposite one.
    """

    d: int
    radius: int
    periodic: bool = True
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        check_dim(self.d)
        if self.radius < 0:
            raise LatticeError("radius must be >= 0")
        if self.periodic and 2 * self.radius + 1 < 3:
            raise LatticeError("a periodic window needs side >= 3")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(cube_sites(self.radius, self.d))})

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    @property
    def ncoin(self) -> int:
        return 2 * self.d

    @property
    def nsites(self) -> int:
        return self.side**self.d

    @property
    def dim(self) -> int:
        return self.nsites * self.ncoin

    @cached_property
    def sites(self) -> np.ndarray:
        return np.array(cube_sites(self.radius, self.d), dtype=np.int64).reshape(-1, self.d)

    @cached_property
    def site_norms(self) -> np.ndarray:
        return np.max(np.abs(self.sites), axis=1)

    def site_position(self, x) -> int:
        key = tuple(int(v) for v in x)
        if len(key) != self.d:
            raise LatticeError(f"site {x!r} has dimension {len(key)}, expected {self.d}")
        try:
            return self._index[key]
        except KeyError:
            raise OutOfRegionError(f"site {key} outside cube of radius {self.radius}") from None

    def contains(self, x) -> bool:
        return len(x) == self.d and sup_norm(x) <= self.radius

    def _wrap(self, coords: np.ndarray) -> np.ndarray:
        return (coords + self.radius) % self.side - self.radius

    @cached_property
    def neighbors(self) -> np.ndarray:
        """``nbr[s, c]`` = position of ``x_s + r(tau_c)``; ``-1`` if it leaves an open window."""
        jumps = jump_table(self.d)
        target = self.sites[:, None, :] + jumps[None, :, :]
        inside = np.max(np.abs(target), axis=2) <= self.radius
        if self.periodic:
            target = self._wrap(target)
            inside[:] = True
        # lexicographic position of an in-cube point
        strides = self.side ** np.arange(self.d - 1, -1, -1)
        pos = ((target + self.radius) * strides).sum(axis=2)
        return np.where(inside, pos, -1).astype(np.int64)

    @cached_property
    def wraps(self) -> np.ndarray:
        """Boolean ``(nsites, 2d)``: the jump crosses the window edge."""
        jumps = jump_table(self.d)
        target = self.sites[:, None, :] + jumps[None, :, :]
        return np.max(np.abs(target), axis=2) > self.radius

    def flat_index(self, label: BasisLabel) -> int:
        if len(label.site) != self.d:
            raise LatticeError("label dimension mismatch")
        return self.site_position(label.site) * self.ncoin + coin_position(label.coin, self.d)

    def label(self, k: int) -> BasisLabel:
        if not 0 <= k < self.dim:
            raise OutOfRegionError(f"flat index {k} out of range [0, {self.dim})")
        s, c = divmod(int(k), self.ncoin)
        return BasisLabel(coin_from_position(c, self.d), tuple(int(v) for v in self.sites[s]))

    def labels(self) -> list[BasisLabel]:
        return [self.label(k) for k in range(self.dim)]

    @cached_property
    def state_norms(self) -> np.ndarray:
        """Sup-norm of the site of every flat basis index."""
        return np.repeat(self.site_norms, self.ncoin)


def flat_index(label: BasisLabel, region: CubeRegion) -> int:
    return region.flat_index(label)


def label_of(k: int, region: CubeRegion) -> BasisLabel:
    return region.label(k)
