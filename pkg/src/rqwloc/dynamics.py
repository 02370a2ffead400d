"""Time evolution, position moments and transport exponents."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _accel
from .coins import CoinPermutation
from .disorder import PhaseDistribution, PhaseField, sample_phases, zero_phases
from .lattice import BasisLabel, sup_norm
from .walk import DimensionError, WalkOperator, apply, build_collared, collared_window


@dataclass
class TransportSeries:
    """Position moments ``|| |X|^p U^n psi0 ||`` for ``n = 0..N``."""

    p: float
    moments: np.ndarray
    exponent: float = float("nan")
    sup: float = float("nan")
    fit: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.moments))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "moment"])
            for n, m in enumerate(self.moments):
                w.writerow([n, repr(float(m))])
        return path

    def summary(self) -> dict:
        return {"p": self.p, "exponent": self.exponent, "K_omega": self.sup, "fit": self.fit}

    def to_json(self) -> str:
        return json.dumps(self.summary())


def basis_state(U: WalkOperator, label: BasisLabel) -> np.ndarray:
    psi = np.zeros(U.dim, dtype=np.complex128)
    psi[U.index_of(label)] = 1.0
    return psi


def localized_state(U: WalkOperator, amplitudes: dict[BasisLabel, complex], normalize: bool = True) -> np.ndarray:
    psi = np.zeros(U.dim, dtype=np.complex128)
    for lab, a in amplitudes.items():
        psi[U.index_of(lab)] += a
    if normalize:
        nrm = np.linalg.norm(psi)
        if nrm == 0:
            raise ValueError("initial state has zero norm")
        psi /= nrm
    return psi


def evolve(U: WalkOperator, psi0: np.ndarray, n: int) -> np.ndarray:
    """``U^n psi0``; negative ``n`` applies the adjoint ``|n|`` times."""
    psi = np.asarray(psi0, dtype=np.complex128).copy()
    if psi.shape != (U.dim,):
        raise DimensionError(f"state has shape {psi.shape}, operator dimension is {U.dim}")
    for _ in range(abs(int(n))):
        psi = apply(U, psi, adjoint=n < 0)
    return psi


def position_moment(psi: np.ndarray, norms: np.ndarray, p: float) -> float:
    """``(sum |x|^{2p} |psi(tau, x)|^2)^{1/2}`` with ``|x|`` the sup-norm.

    ``norms`` holds the sup-norm of the site of each basis state.
    """
    if p < 0:
        raise ValueError("moment order must be >= 0")
    w = np.asarray(norms, dtype=float) ** (2 * p) if p > 0 else np.ones(len(norms))
    return float(np.sqrt(np.sum(w * np.abs(psi) ** 2)))


def support_radius(psi: np.ndarray, norms: np.ndarray, tol: float = 0.0) -> int:
    nz = np.abs(psi) > tol
    return int(norms[nz].max()) if np.any(nz) else 0


def moment_series(U: WalkOperator, psi0: np.ndarray, N: int, p: float) -> np.ndarray:
    """Moments at ``n = 0..N``; uses the compiled kernel on full windows."""
    psi0 = np.asarray(psi0, dtype=np.complex128)
    if psi0.shape != (U.dim,):
        raise DimensionError(f"state has shape {psi0.shape}, operator dimension is {U.dim}")
    norms = U.state_norms.astype(float)
    if U.is_restricted:
        out = np.empty(N + 1)
        psi = psi0.copy()
        out[0] = position_moment(psi, norms, p)
        for n in range(1, N + 1):
            psi = apply(U, psi)
            out[n] = position_moment(psi, norms, p)
        return out
    weight = norms.reshape(-1, U.region.ncoin)[:, 0] ** (2 * p) if p > 0 else np.ones(U.region.nsites)
    moments_sq = np.empty(N + 1)
    psi = psi0.reshape(-1, U.region.ncoin).copy()
    _accel.evolve_with_moments(psi, *U.kernel_args(), N, np.ascontiguousarray(weight), moments_sq)
    return np.sqrt(np.maximum(moments_sq, 0.0))


def growth_exponent(moments: np.ndarray) -> tuple[float, dict]:
    """Least-squares slope of ``log moment`` vs ``log n`` over the second half.

    Zero moments are skipped.  A constant tail gives exponent 0.
    """
    N = len(moments) - 1
    n = np.arange(N + 1)
    sel = (n >= max(1, N // 2)) & (moments > 0)
    if np.count_nonzero(sel) < 2:
        return 0.0, {"points": int(np.count_nonzero(sel)), "note": "fewer than two nonzero tail points"}
    lx, ly = np.log(n[sel]), np.log(moments[sel])
    if np.ptp(ly) == 0.0:
        return 0.0, {"points": int(sel.sum()), "intercept": float(ly[0]), "r2": 1.0}
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    r2 = 1.0 - resid.var() / ly.var()
    return float(slope), {"points": int(sel.sum()), "intercept": float(intercept), "r2": float(r2)}


def transport_series(U: WalkOperator, psi0: np.ndarray, N: int, p: float = 1.0) -> TransportSeries:
    if N < 16:
        raise ValueError("transport horizon must be >= 16")
    moments = moment_series(U, psi0, N, p)
    e, fit = growth_exponent(moments)
    return TransportSeries(p=p, moments=moments, exponent=e, sup=float(moments.max()), fit=fit)


def transport_window(N: int, support: int = 0) -> int:
    """Collar radius for which ``N`` steps never reach the collar."""
    return max(3, N + support + 3)


def free_space_operator(
    C: np.ndarray,
    N: int,
    pi: CoinPermutation | None = None,
    dist: PhaseDistribution | None = None,
    seed: int = 0,
    stream=(),
    support: int = 0,
) -> WalkOperator:
    """Collared operator large enough that an ``N``-step evolution is exact."""
    d = C.shape[0] // 2
    L = transport_window(N, support)
    region = collared_window(L, d)
    if dist is None or dist.kind == "zero":
        omega: PhaseField = zero_phases(region)
    else:
        omega = sample_phases(region, dist, seed, stream)
    return build_collared(C, omega, L, pi)


def averaged_transport(
    C: np.ndarray,
    N: int,
    p: float,
    samples: int,
    seed: int,
    dist: PhaseDistribution | None = None,
    initial: dict[BasisLabel, complex] | None = None,
    pi: CoinPermutation | None = None,
) -> tuple[np.ndarray, list[TransportSeries]]:
    """Disorder-averaged moment sequence over ``samples`` realizations."""
    d = C.shape[0] // 2
    origin = (0,) * d
    initial = initial or {BasisLabel(1, origin): 1.0}
    support = max(sup_norm(lab.site) for lab in initial)
    runs = []
    for k in range(samples):
        U = free_space_operator(C, N, pi, dist, seed, (k,), support)
        psi0 = localized_state(U, initial)
        runs.append(transport_series(U, psi0, N, p))
    return np.mean([r.moments for r in runs], axis=0), runs
