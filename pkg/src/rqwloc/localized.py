"""Closed-form spectra of the fully localized walk ``U_omega(C_pi)``.

For a full-cycle permutation the walk permutes basis states along orbits of
length ``2d``; the orbit block is a weighted cyclic shift whose eigenvalues are
``exp(i alpha / 2d)`` times the ``2d``-th roots of unity, where ``alpha`` is the
sum of the phases collected around the orbit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .coins import CoinPermutation
from .disorder import PhaseField
from .lattice import BasisLabel, CubeRegion, coin_from_position, coin_position, jump

TWO_PI = 2.0 * np.pi


class NotFullCycleError(ValueError):
    """The permutation is not a single ``2d``-cycle."""


@dataclass(frozen=True)
class Orbit:
    seed: BasisLabel
    members: tuple[BasisLabel, ...]


@dataclass(frozen=True)
class OrbitSpectrum:
    alpha: float
    eigenvalues: np.ndarray

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
        }


def _require_full_cycle(pi: CoinPermutation):
    if not pi.is_full_cycle:
        raise NotFullCycleError(f"permutation with cycles {pi.cycles} is not a single 2d-cycle")


def orbit(tau: int, x, pi: CoinPermutation) -> Orbit:
    """Orbit of ``|tau, x>``: member ``k`` is ``|pi^k(tau), x + sum_{s=1..k} r(pi^s(tau))>``."""
    _require_full_cycle(pi)
    d = pi.d
    seed = BasisLabel(tau, tuple(x))
    members = [seed]
    t, pos = tau, np.array(seed.site, dtype=np.int64)
    for _ in range(2 * d - 1):
        t = pi(t)
        pos = pos + np.array(jump(t, d))
        members.append(BasisLabel(t, tuple(int(v) for v in pos)))
    return Orbit(seed, tuple(members))


def _wrap(region: CubeRegion, site):
    if not region.periodic:
        return site
    return tuple(int((v + region.radius) % region.side - region.radius) for v in site)


def alpha_phase(omega: PhaseField, tau: int, x, pi: CoinPermutation) -> float:
    """Sum of ``omega`` over the orbit of ``|tau, x>``, reduced to ``[0, 2pi)``."""
    orb = orbit(tau, x, pi)
    total = sum(omega.phase(m.coin, _wrap(omega.region, m.site)) for m in orb.members)
    return float(np.mod(total, TWO_PI))


def orbit_spectrum(alpha: float, d: int) -> OrbitSpectrum:
    n = 2 * d
    roots = np.exp(2j * np.pi * np.arange(n) / n)
    return OrbitSpectrum(float(np.mod(alpha, TWO_PI)), np.exp(1j * alpha / n) * roots)


def orbit_partition(region: CubeRegion, indices, pi: CoinPermutation) -> list[np.ndarray]:
    """Split window indices into orbits of the ``C_pi`` walk.

    Each returned array lists window flat indices in orbit order, starting
    from the smallest index.  Raises if some orbit leaves ``indices``.
    """
    _require_full_cycle(pi)
    d, nc = region.d, region.ncoin
    nbr = region.neighbors
    img = {c: coin_position(pi(coin_from_position(c, d)), d) for c in range(nc)}
    indices = np.asarray(indices, dtype=np.int64)
    inside = set(int(k) for k in indices)
    seen: set[int] = set()
    out = []
    for k in sorted(inside):
        if k in seen:
            continue
        cyc = [k]
        seen.add(k)
        cur = k
        while True:
            s, c = divmod(cur, nc)
            c2 = img[c]
            s2 = nbr[s, c2]
            nxt = int(s2 * nc + c2)
            if nxt == k:
                break
            if s2 < 0 or nxt not in inside:
                raise ValueError(f"orbit of window index {k} leaves the given subspace")
            cyc.append(nxt)
            seen.add(nxt)
            cur = nxt
        out.append(np.array(cyc, dtype=np.int64))
    return out


def block_alpha(phase_angles: np.ndarray, orbit_indices: np.ndarray, nc: int) -> float:
    """``alpha`` of an orbit given window phase angles of shape ``(nsites, 2d)``."""
    s, c = np.divmod(orbit_indices, nc)
    return float(np.mod(phase_angles[s, c].sum(), TWO_PI))


def oracle_spectrum(omega: PhaseField, indices, pi: CoinPermutation) -> list[OrbitSpectrum]:
    """Exact spectra of all orbit blocks of ``U_omega(C_pi)`` restricted to ``indices``."""
    nc = omega.region.ncoin
    return [
        orbit_spectrum(block_alpha(omega.values, orb, nc), pi.d)
        for orb in orbit_partition(omega.region, indices, pi)
    ]


def dumps(spectra: list[OrbitSpectrum]) -> str:
    return json.dumps([s.to_json() for s in spectra])
