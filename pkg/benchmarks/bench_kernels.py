"""Compare the numba and numpy evolution kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--steps 200] [--repeat 3]

Prints one row per (d, L) window: wall time per step for each backend,
the speedup, and the max deviation between the two moment sequences.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from rqwloc import _accel
from rqwloc.coins import CoinPermutation, perturbed_coin
from rqwloc.disorder import sample_phases
from rqwloc.lattice import CubeRegion
from rqwloc.walk import build_bulk

CASES = [(1, 500), (1, 5000), (2, 40), (2, 150), (3, 15)]


def _time(kernel, U, psi0, weight, steps, repeat):
    best = np.inf
    moments = np.empty(steps + 1)
    for _ in range(repeat):
        psi = psi0.copy()
        t0 = time.perf_counter()
        kernel(psi, *U.kernel_args(), steps, weight, moments)
        best = min(best, time.perf_counter() - t0)
    return best / steps, moments.copy()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba path unavailable (missing or disabled by RQWLOC_DISABLE_NUMBA)")

    print(f"{'d':>2} {'L':>5} {'dim':>8} {'numpy us/step':>14} {'numba us/step':>14} {'speedup':>8} {'max dev':>9}")
    for d, L in CASES:
        region = CubeRegion(d, L)
        U = build_bulk(perturbed_coin(CoinPermutation.standard_cycle(d), 0.3, 0), sample_phases(region, seed=1))
        psi0 = np.zeros((region.nsites, 2 * d), dtype=np.complex128)
        psi0[region.nsites // 2, 0] = 1.0
        weight = region.site_norms.astype(float) ** 2
        # compile outside the timed region
        _accel._evolve_numba(psi0.copy(), *U.kernel_args(), 1, weight, np.empty(2))
        t_np, m_np = _time(_accel._evolve_numpy, U, psi0, weight, args.steps, args.repeat)
        t_nb, m_nb = _time(_accel._evolve_numba, U, psi0, weight, args.steps, args.repeat)
        dev = float(np.max(np.abs(m_np - m_nb) / np.maximum(m_np, 1.0)))
        print(f"{d:>2} {L:>5} {region.dim:>8} {t_np * 1e6:>14.1f} {t_nb * 1e6:>14.1f} {t_np / t_nb:>8.1f} {dev:>9.1e}")


if __name__ == "__main__":
    main()
