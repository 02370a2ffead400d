"""Spectral probes: Poisson-kernel functional calculus, second-moment
(Graf) diagnostic and the two-phase conditional fractional moment."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .green import Resolvent, check_spectral_parameter
from .lattice import BasisLabel, coin_indices
from .model import WalkModel
from .walk import WalkOperator

BUILTIN_FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "one": lambda w: np.ones_like(w),
    "z": lambda w: w,
    "z2": lambda w: w**2,
    "real": lambda w: w.real + 0j,
    # smooth bump supported on the arc |arg w| < pi/2
    "arc": lambda w: _smooth_arc(np.angle(w)) + 0j,
}


def _smooth_arc(phi, half_width=np.pi / 2):
    t = np.clip(np.abs(phi) / half_width, 0.0, 1.0)
    out = np.zeros_like(t)
    inner = t < 1.0
    out[inner] = np.exp(1.0 - 1.0 / (1.0 - t[inner] ** 2))
    return out


class ResolutionError(ValueError):
    pass


@dataclass(frozen=True)
class PoissonConfig:
    r: float
    grid: int = 2**16
    f: str | Callable = "one"

    def __post_init__(self):
        if not 0.0 < self.r < 1.0:
            raise ResolutionError(f"radius must lie in (0, 1), got {self.r}")
        if self.grid < 64:
            raise ResolutionError("theta grid must have at least 64 points")
        if self.grid < 64.0 / (1.0 - self.r) * (1 - 1e-12):
            raise ResolutionError(f"grid {self.grid} too coarse for r={self.r}; need >= {64.0 / (1.0 - self.r):.0f}")

    @property
    def func(self) -> Callable:
        if callable(self.f):
            return self.f
        try:
            return BUILTIN_FUNCTIONS[self.f]
        except KeyError:
            raise ResolutionError(f"unknown test function {self.f!r}") from None

    @property
    def thetas(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.grid) / self.grid


def unitary_eig(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and orthonormal eigenvectors of a normal matrix via Schur."""
    T, Z = sla.schur(np.asarray(M, dtype=np.complex128), output="complex")
    return np.diag(T).copy(), Z


def _poisson_weights(ev: np.ndarray, cfg: PoissonConfig, chunk: int = 4096) -> np.ndarray:
    """``(1 - r^2)/(2pi) * trapezoid of f(e^{i theta}) / |lambda - r e^{i theta}|^2``."""
    th = cfg.thetas
    fvals = cfg.func(np.exp(1j * th))
    out = np.zeros(len(ev), dtype=np.complex128)
    for start in range(0, len(th), chunk):
        w = cfg.r * np.exp(1j * th[start : start + chunk])
        kern = 1.0 / np.abs(ev[:, None] - w[None, :]) ** 2
        out += kern @ fvals[start : start + chunk]
    return out * (1.0 - cfg.r**2) / cfg.grid


def poisson_matrix(U, cfg: PoissonConfig) -> np.ndarray:
    """Quadrature approximation of ``f(U)`` for every matrix element."""
    M = U.dense() if isinstance(U, WalkOperator) else np.asarray(U)
    ev, Z = unitary_eig(M)
    g = _poisson_weights(ev, cfg)
    return (Z * g[None, :]) @ Z.conj().T


def _index(U, lab):
    if isinstance(lab, BasisLabel):
        return U.index_of(lab)
    return int(lab)


def poisson_reconstruct(U, frm, to, cfg: PoissonConfig) -> complex:
    """Approximate ``<frm| f(U) |to>`` by the resolvent-product integral at radius ``cfg.r``.

    The integrand ``<frm|(U - w)^{-1} (U^{-1} - conj w)^{-1}|to>`` is evaluated
    in the eigenbasis of ``U``; for ``frm == to`` it is a squared norm, and its
    positivity is checked on the whole grid.
    """
    M = U.dense() if isinstance(U, WalkOperator) else np.asarray(U)
    a, b = _index(U, frm), _index(U, to)
    ev, Z = unitary_eig(M)
    if a == b:
        w = cfg.r * np.exp(1j * cfg.thetas[:: max(1, cfg.grid // 4096)])
        dens = (np.abs(Z[a, :]) ** 2)[:, None] / np.abs(ev[:, None] - w[None, :]) ** 2
        assert np.all(dens.sum(axis=0) >= 0.0)
    g = _poisson_weights(ev, cfg)
    return complex(np.sum(Z[a, :] * g * Z[b, :].conj()))


def poisson_integrand_direct(M: np.ndarray, a: int, b: int, w: complex) -> complex:
    """``<a|(M - w)^{-1} (M^{-1} - conj w)^{-1}|b>`` by two dense solves."""
    n = M.shape[0]
    eb = np.zeros(n, dtype=complex)
    eb[b] = 1.0
    v = np.linalg.solve(np.linalg.inv(M) - np.conj(w) * np.eye(n), eb)
    u = np.linalg.solve(M - w * np.eye(n), v)
    return complex(u[a])


def exact_function(M: np.ndarray, f: str | Callable) -> np.ndarray:
    func = f if callable(f) else BUILTIN_FUNCTIONS[f]
    ev, Z = unitary_eig(M)
    return (Z * func(ev)[None, :]) @ Z.conj().T


def poisson_error_ladder(M: np.ndarray, f="one", radii=(0.9, 0.99, 0.999), grid: int = 2**16) -> list[dict]:
    """Max entrywise error of the Poisson reconstruction for each radius."""
    exact = exact_function(M, f)
    rows = []
    for r in radii:
        approx = poisson_matrix(M, PoissonConfig(r, grid, f))
        rows.append({"f": f if isinstance(f, str) else "custom", "r": float(r), "grid": grid, "error": float(np.max(np.abs(approx - exact)))})
    return rows


# ---------------------------------------------------------------------------
# Graf second-moment diagnostic
# ---------------------------------------------------------------------------


def angular_second_moment(ev: np.ndarray, Z: np.ndarray, b: int, rho: float) -> np.ndarray:
    """``|1 - rho^2|`` times the mean of ``|G(a, b; rho e^{i phi})|^2`` over ``phi``, for every ``a``.

    With ``G = sum_k c_k / (lambda_k - w)`` the angular integral of
    ``1 / ((lambda_k - w) conj(lambda_l - w))`` equals
    ``1 / (lambda_k conj(lambda_l) - rho^2)`` inside the circle and its
    negative outside.
    """
    if abs(rho - 1.0) < 1e-12:
        raise ValueError("rho must differ from 1")
    prod = ev[:, None] * ev.conj()[None, :]
    J = abs(1 - rho**2) / (prod - rho**2)
    if rho > 1:
        J = -J
    u = Z * Z[b, :].conj()[None, :]
    return np.real(np.einsum("ak,kl,al->a", u, J, u.conj()))


@dataclass
class GrafTable:
    L: int
    z_grid: list
    distances: np.ndarray
    lhs: np.ndarray  # (z, distance), worst target and coin pair
    rhs: np.ndarray  # (z, distance)
    rotation_average: bool = False

    @property
    def ratio(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.rhs > 0, self.lhs / self.rhs, np.where(self.lhs > 0, np.inf, 0.0))

    @property
    def fitted_K(self) -> float:
        return float(np.max(self.ratio))

    def rows(self):
        for iz, z in enumerate(self.z_grid):
            for j, dist in enumerate(self.distances):
                yield {
                    "L": self.L,
                    "z_re": float(z.real),
                    "z_im": float(z.imag),
                    "distance": int(dist),
                    "lhs": float(self.lhs[iz, j]),
                    "rhs": float(self.rhs[iz, j]),
                    "ratio": float(self.ratio[iz, j]),
                }


def graf_diagnostic(
    model: WalkModel,
    L: int,
    z_grid,
    samples: int,
    s: float = 0.5,
    seed: int = 0,
    max_distance=None,
    rotation_average: bool | None = None,
) -> GrafTable:
    """Both sides of the second-moment estimate for axial targets ``x``, source ``y = 0``.

    LHS = ``|1 - |z|^2| E|G_{tau sigma}(x, y; z)|^2`` (max over coins) and
    RHS = ``sum_{|m - x| <= 4} max_{tau', sigma'} E|G_{tau' sigma'}(m, y; z)|^s``.

    Uniform phases are invariant under a global shift, so both expectations
    depend on ``|z|`` only.  With ``rotation_average`` (default for uniform
    phases) each realization contributes its average over ``arg z``: exact
    for the second moment, over the angles of the grid at that radius for the
    fractional one.  Both are unbiased for the same expectations and far less
    noisy near the unit circle.
    """
    d = model.d
    z_grid = [check_spectral_parameter(z) for z in z_grid]
    if rotation_average is None:
        rotation_average = model.dist.kind == "uniform"
    if rotation_average and model.dist.kind != "uniform":
        raise ValueError("rotation averaging needs rotation-invariant (uniform) phases")
    max_distance = L // 2 if max_distance is None else max_distance
    distances = np.arange(0, max_distance + 1)
    radii = sorted({round(abs(z), 14) for z in z_grid})
    probe = model.restricted(L, seed, (0,))
    sites: dict = {}
    for i, n in enumerate(probe.state_norms):
        if n <= L:
            sites.setdefault(probe.region.label(int(probe.indices[i])).site, []).append(i)
    site_keys = list(sites)
    src_labels = [BasisLabel(t, (0,) * d) for t in coin_indices(d)]
    nz, ns, nc = len(z_grid), len(site_keys), 2 * d
    second = np.zeros((nz, ns, nc, nc))
    frac = np.zeros_like(second)
    for k in range(samples):
        U = model.restricted(L, seed, (k,))
        src = [U.index_of(lab) for lab in src_labels]
        cols = {iz: np.abs(Resolvent(U, z).columns(src)) for iz, z in enumerate(z_grid)}
        if rotation_average:
            ev, Z = unitary_eig(U.dense())
            for rho in radii:
                group = [iz for iz, z in enumerate(z_grid) if round(abs(z), 14) == rho]
                sec = np.stack([angular_second_moment(ev, Z, b, rho) for b in src], axis=1)
                fr = np.mean([cols[iz] ** s for iz in group], axis=0)
                for iz in group:
                    for j, key in enumerate(site_keys):
                        second[iz, j] += sec[sites[key]]
                        frac[iz, j] += fr[sites[key]]
        else:
            for iz, z in enumerate(z_grid):
                g = cols[iz]
                w = abs(1 - abs(z) ** 2)
                for j, key in enumerate(site_keys):
                    second[iz, j] += w * g[sites[key]] ** 2
                    frac[iz, j] += g[sites[key]] ** s
    second /= samples
    frac /= samples
    frac_max = frac.max(axis=(2, 3))
    coords = np.array(site_keys)
    lhs = np.zeros((nz, len(distances)))
    rhs = np.zeros_like(lhs)
    ratio = np.full_like(lhs, -1.0)
    for j, dist in enumerate(distances):
        targets = {tuple(int(v) for v in sgn * dist * e) for e in np.eye(d, dtype=int) for sgn in (1, -1)}
        for x in targets:
            jx = site_keys.index(x)
            near = np.max(np.abs(coords - np.array(x)), axis=1) <= 4
            for iz in range(nz):
                l = second[iz, jx].max()
                r = frac_max[iz, near].sum()
                q = l / r if r > 0 else (np.inf if l > 0 else 0.0)
                if q > ratio[iz, j]:
                    ratio[iz, j], lhs[iz, j], rhs[iz, j] = q, l, r
    return GrafTable(L, z_grid, distances, lhs, rhs, bool(rotation_average))


# ---------------------------------------------------------------------------
# two-phase conditional moment
# ---------------------------------------------------------------------------


def two_phase_moments(U: WalkOperator, z: complex, a: int, b: int, s: float, grid: int = 64) -> np.ndarray:
    """``|G_ab|^s`` on a ``grid x grid`` lattice of the phases at rows ``a`` and ``b``.

    ``U`` is rewritten as ``E(theta) U_0`` where ``E`` carries the two free
    phases; the 2x2 block of ``(U - z)^{-1}`` on ``{a, b}`` then follows from
    the block of ``(U_0 - z)^{-1}`` by a rank-two update.
    """
    if a == b:
        raise ValueError("distinguished labels must differ")
    z = check_spectral_parameter(z)
    M = U.dense()
    window = np.arange(U.region.dim) if U.indices is None else U.indices
    ph = U.phase.reshape(-1)[window]
    M[a, :] *= np.conj(ph[a])
    M[b, :] *= np.conj(ph[b])
    n = M.shape[0]
    E = np.zeros((n, 2), dtype=complex)
    E[a, 0] = E[b, 1] = 1.0
    Minv = np.linalg.solve(M - z * np.eye(n), E)
    B = Minv[[a, b], :]
    th = 2 * np.pi * np.arange(grid) / grid
    da = -z * (np.exp(-1j * th) - 1.0)
    ta, tb = np.meshgrid(da, da, indexing="ij")
    # (B^{-1} + D)^{-1} = B (I + D B)^{-1}, D = diag(ta, tb)
    m00 = 1 + ta * B[0, 0]
    m01 = ta * B[0, 1]
    m10 = tb * B[1, 0]
    m11 = 1 + tb * B[1, 1]
    det = m00 * m11 - m01 * m10
    # entry (0, 1) of B @ inv(m)
    g01 = (B[0, 0] * (-m01) + B[0, 1] * m00) / det
    return np.abs(g01) ** s


def conditional_moment_check(
    model: WalkModel,
    z: complex,
    samples: int,
    L: int = 8,
    s: float = 0.5,
    pair: tuple[BasisLabel, BasisLabel] | None = None,
    seed: int = 0,
    grid: int = 64,
) -> dict:
    """Max over backgrounds of the double phase average of ``|G|^s``."""
    if not model.dist.has_density:
        raise ValueError("conditional moment check needs a phase distribution with a density")
    d = model.d
    if pair is None:
        x = tuple([2] + [0] * (d - 1))
        pair = (BasisLabel(1, x), BasisLabel(1, (0,) * d))
    th = 2 * np.pi * np.arange(grid) / grid
    dens = model.dist.pdf(th) * (2 * np.pi / grid)
    weights = np.outer(dens, dens)
    vals = []
    for k in range(samples):
        U = model.restricted(L, seed, (k,))
        a, b = U.index_of(pair[0]), U.index_of(pair[1])
        vals.append(float(np.sum(two_phase_moments(U, z, a, b, s, grid) * weights)))
    vals = np.asarray(vals)
    return {"z": [complex(z).real, complex(z).imag], "s": s, "max": float(vals.max()), "mean": float(vals.mean()), "values": vals.tolist()}
