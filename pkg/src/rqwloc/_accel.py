"""Hot kernels for walk evolution, with a numba path and a numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``RQWLOC_DISABLE_NUMBA`` is unset or ``0``.  Both paths compute
the same quantities to rounding; ``benchmarks/bench_kernels.py`` compares them.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("RQWLOC_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLE:
        raise ImportError("numba disabled by RQWLOC_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag in a subprocess
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrapper(f):
            return f

        return wrapper


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy reference implementations (always importable)
# ---------------------------------------------------------------------------


def _step_numpy(psi, out, coins, coin_id, nbr, phase):
    # psi, out: (n_sites, 2d); coins: (K, 2d, 2d); nbr: (n_sites, 2d), -1 = dropped
    mixed = np.einsum("sij,sj->si", coins[coin_id], psi)
    out[...] = 0.0
    ncoin = psi.shape[1]
    for c in range(ncoin):
        dest = nbr[:, c]
        ok = dest >= 0
        out[dest[ok], c] = phase[dest[ok], c] * mixed[ok, c]
    return out


def _step_adjoint_numpy(psi, out, coins, coin_id, nbr, phase):
    # U^dagger: gather from |c, x + r(c)>, then apply C(x)^dagger
    ncoin = psi.shape[1]
    gathered = np.zeros_like(psi)
    for c in range(ncoin):
        dest = nbr[:, c]
        ok = dest >= 0
        gathered[ok, c] = np.conj(phase[dest[ok], c]) * psi[dest[ok], c]
    out[...] = np.einsum("sji,sj->si", np.conj(coins[coin_id]), gathered)
    return out


def _moment_sq_numpy(psi, weight):
    return float(np.sum(weight[:, None] * (psi.real**2 + psi.imag**2)))


def _evolve_numpy(psi, coins, coin_id, nbr, phase, nsteps, weight, moments):
    buf = np.empty_like(psi)
    moments[0] = _moment_sq_numpy(psi, weight)
    for n in range(1, nsteps + 1):
        _step_numpy(psi, buf, coins, coin_id, nbr, phase)
        psi, buf = buf, psi
        moments[n] = _moment_sq_numpy(psi, weight)
    return psi


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _step_numba(psi, out, coins, coin_id, nbr, phase):
    nsites, ncoin = psi.shape
    for s in range(nsites):
        for c in range(ncoin):
            out[s, c] = 0.0
    for s in range(nsites):
        k = coin_id[s]
        for c in range(ncoin):
            dest = nbr[s, c]
            if dest < 0:
                continue
            acc = 0.0j
            for j in range(ncoin):
                acc += coins[k, c, j] * psi[s, j]
            out[dest, c] = phase[dest, c] * acc
    return out


@njit(cache=True)
def _step_adjoint_numba(psi, out, coins, coin_id, nbr, phase):
    nsites, ncoin = psi.shape
    tmp = np.empty(ncoin, dtype=np.complex128)
    for s in range(nsites):
        k = coin_id[s]
        for c in range(ncoin):
            dest = nbr[s, c]
            if dest < 0:
                tmp[c] = 0.0
            else:
                tmp[c] = np.conj(phase[dest, c]) * psi[dest, c]
        for i in range(ncoin):
            acc = 0.0j
            for j in range(ncoin):
                acc += np.conj(coins[k, j, i]) * tmp[j]
            out[s, i] = acc
    return out


@njit(cache=True)
def _moment_sq_numba(psi, weight):
    nsites, ncoin = psi.shape
    acc = 0.0
    for s in range(nsites):
        for c in range(ncoin):
            v = psi[s, c]
            acc += weight[s] * (v.real * v.real + v.imag * v.imag)
    return acc


@njit(cache=True)
def _evolve_numba(psi, coins, coin_id, nbr, phase, nsteps, weight, moments):
    buf = np.empty_like(psi)
    moments[0] = _moment_sq_numba(psi, weight)
    for n in range(1, nsteps + 1):
        _step_numba(psi, buf, coins, coin_id, nbr, phase)
        psi, buf = buf, psi
        moments[n] = _moment_sq_numba(psi, weight)
    return psi


if HAVE_NUMBA:
    walk_step = _step_numba
    walk_step_adjoint = _step_adjoint_numba
    weighted_norm_sq = _moment_sq_numba
    evolve_with_moments = _evolve_numba
else:
    walk_step = _step_numpy
    walk_step_adjoint = _step_adjoint_numpy
    weighted_norm_sq = _moment_sq_numpy
    evolve_with_moments = _evolve_numpy
