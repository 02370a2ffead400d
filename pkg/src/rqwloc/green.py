"""Green functions, fractional moments, eigenfunction correlators and gap probes."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components
from scipy.stats import binomtest, trim_mean

from .coins import perturbed_coin
from .lattice import BasisLabel, coin_indices
from .localized import orbit_partition
from .model import WalkModel
from .walk import WalkOperator

log = logging.getLogger(__name__)

DENSE_MAX = 512
CLUSTER_TOL = 1e-12


class SolverError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class FitError(ValueError):
    pass


def check_spectral_parameter(z: complex) -> complex:
    z = complex(z)
    if abs(abs(z) - 1.0) < 1e-12:
        raise ValueError(f"spectral parameter {z} lies on the unit circle")
    return z


def default_z_grid(eps: float = 1e-3, n_angles: int = 8) -> list[complex]:
    angles = 2 * np.pi * np.arange(n_angles) / n_angles
    return [r * np.exp(1j * a) for r in (1 - eps, 1 + eps) for a in angles]


class Resolvent:
    """Factorized ``(U - z)^{-1}`` (or ``(U^* - z)^{-1}`` with ``adjoint=True``)."""

    def __init__(self, U: WalkOperator, z: complex, adjoint: bool = False):
        self.U = U
        self.z = check_spectral_parameter(z)
        M = U.matrix.conj().T if adjoint else U.matrix
        self.dim = U.dim
        if self.dim <= DENSE_MAX:
            self._A = M.toarray() - self.z * np.eye(self.dim)
            self._lu = sla.lu_factor(self._A, check_finite=False)
            self._solve = lambda b: sla.lu_solve(self._lu, b, check_finite=False)
        else:
            self._A = (M - self.z * sp.identity(self.dim, format="csc", dtype=complex)).tocsc()
            lu = spla.splu(self._A)
            self._solve = lu.solve

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=np.complex128)
        w = self._solve(b)
        r = b - self._A @ w
        rn = _colnorm(r)
        tol = 1e-10 * np.maximum(_colnorm(w), 1.0)
        if np.any(rn > 1e-3 * tol):
            w = w + self._solve(r)
            r = b - self._A @ w
            rn = _colnorm(r)
        if np.any(rn > tol) or not np.all(np.isfinite(w)):
            raise SolverError("resolvent solve failed", float(np.max(rn)))
        return w

    def columns(self, idx) -> np.ndarray:
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        E = np.zeros((self.dim, len(idx)), dtype=np.complex128)
        E[idx, np.arange(len(idx))] = 1.0
        return self.solve(E)


def _colnorm(a):
    return np.linalg.norm(a, axis=0) if a.ndim == 2 else np.atleast_1d(np.linalg.norm(a))


def green(U: WalkOperator, z: complex, frm: BasisLabel, to: BasisLabel) -> complex:
    """``<frm| (U - z)^{-1} |to>``."""
    R = Resolvent(U, z)
    col = R.columns([U.index_of(to)])[:, 0]
    return complex(col[U.index_of(frm)])


# ---------------------------------------------------------------------------
# pair geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairSet:
    """Pairs ``(|tau, x>, |sigma, y>)`` with a common source site ``y``.

    Targets lie on the coordinate axes at sup-distance ``k`` from ``y``;
    every coin combination is included.
    """

    source: tuple[int, ...]
    distances: tuple[int, ...]
    targets: dict = field(default_factory=dict)

    @classmethod
    def axial(cls, d: int, distances, source=None, axes=None) -> "PairSet":
        source = tuple(source) if source is not None else (0,) * d
        axes = range(d) if axes is None else axes
        targets = {}
        for k in distances:
            sites = []
            for a in axes:
                for sgn in (1, -1):
                    x = list(source)
                    x[a] += sgn * k
                    sites.append(tuple(x))
            targets[int(k)] = sites
        return cls(source, tuple(int(k) for k in distances), targets)

    def source_labels(self, d: int) -> list[BasisLabel]:
        return [BasisLabel(s, self.source) for s in coin_indices(d)]

    def target_labels(self, d: int, k: int) -> list[BasisLabel]:
        return [BasisLabel(t, x) for x in self.targets[k] for t in coin_indices(d)]


def _pair_indices(U: WalkOperator, pairs: PairSet):
    d = U.d
    src = np.array([U.index_of(lab) for lab in pairs.source_labels(d)])
    tgt = [np.array([U.index_of(lab) for lab in pairs.target_labels(d, k)]) for k in pairs.distances]
    return src, tgt


# ---------------------------------------------------------------------------
# fits
# ---------------------------------------------------------------------------


@dataclass
class DecayFit:
    gamma: float
    K: float
    r2: float
    distances: tuple[int, int]
    npoints: int
    slope_se: float = float("nan")
    gamma_ci: tuple[float, float] | None = None
    status: str = "ok"

    @property
    def localized(self) -> bool:
        return self.status == "compact support" or self.gamma > 1e-8

    def to_json(self) -> dict:
        out = asdict(self)
        out["localized"] = self.localized
        return out


def decay_fit(distances, estimates) -> DecayFit:
    """Least-squares fit of ``log estimate = log K - gamma * distance``."""
    r = np.asarray(distances, dtype=float)
    y = np.asarray(estimates, dtype=float)
    ok = np.isfinite(y) & (y > 0)
    if np.count_nonzero(ok) < 4 or len(np.unique(r[ok])) < 4:
        raise FitError(f"need at least 4 distinct distances with positive estimates, got {np.count_nonzero(ok)}")
    r, ly = r[ok], np.log(y[ok])
    A = np.vstack([r, np.ones_like(r)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ np.array([slope, intercept])
    sst = float(np.sum((ly - ly.mean()) ** 2))
    sse = float(np.sum(resid**2))
    r2 = 1.0 - sse / sst if sst > 0 else 0.0
    n = len(r)
    se = np.sqrt(sse / (n - 2) / np.sum((r - r.mean()) ** 2)) if n > 2 else float("nan")
    return DecayFit(
        gamma=float(-slope),
        K=float(np.exp(intercept)),
        r2=float(min(max(r2, 0.0), 1.0)),
        distances=(int(r.min()), int(r.max())),
        npoints=n,
        slope_se=float(se),
    )


# ---------------------------------------------------------------------------
# fractional moment sweep
# ---------------------------------------------------------------------------


@dataclass
class FractionalMomentConfig:
    s: float = 0.5
    samples: int = 100
    z_grid: list = field(default_factory=default_z_grid)
    distances: tuple = tuple(range(2, 9))
    L: int = 16
    seed: int = 0
    bootstrap: int = 400

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if min(self.distances) < 2:
            raise ValueError("pair distances must be >= 2")
        if max(self.distances) > self.L:
            raise ValueError("pair distances must fit inside the cube")
        self.z_grid = [check_spectral_parameter(z) for z in self.z_grid]


@dataclass
class SweepResult:
    """Disorder statistics per distance.

    ``values[sample, z, distance]`` holds the pair-averaged statistic of one
    realization.  The headline estimate at each distance is the sample mean
    at the spectral parameter where it is largest (the bound is uniform in z).
    """

    distances: np.ndarray
    z_grid: list
    values: np.ndarray
    config: dict
    failures: int = 0
    fit: DecayFit | None = None
    note: str = ""

    @property
    def per_z_mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    @property
    def worst_z(self) -> np.ndarray:
        return np.argmax(self.per_z_mean, axis=0)

    def _at_worst(self) -> np.ndarray:
        return self.values[:, self.worst_z, np.arange(len(self.distances))]

    @property
    def mean(self) -> np.ndarray:
        return self.per_z_mean.max(axis=0)

    @property
    def median(self) -> np.ndarray:
        return np.median(self._at_worst(), axis=0)

    @property
    def trimmed_mean(self) -> np.ndarray:
        return trim_mean(self._at_worst(), 0.05, axis=0)

    @property
    def se(self) -> np.ndarray:
        n = self.values.shape[0]
        return self._at_worst().std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full(len(self.distances), np.nan)

    def fit_range(self, lo: int, hi: int) -> DecayFit:
        sel = (self.distances >= lo) & (self.distances <= hi)
        return decay_fit(self.distances[sel], self.mean[sel])

    def bootstrap_slope(self, lo: int, hi: int, n_boot: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        sel = (self.distances >= lo) & (self.distances <= hi)
        n = self.values.shape[0]
        slopes = []
        for _ in range(n_boot):
            pick = rng.integers(0, n, n)
            m = self.values[pick].mean(axis=0).max(axis=0)[sel]
            try:
                slopes.append(-decay_fit(self.distances[sel], m).gamma)
            except FitError:
                continue
        return np.asarray(slopes)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["distance", "mean", "median", "trimmed_mean", "se", "n"])
            for row in zip(self.distances, self.mean, self.median, self.trimmed_mean, self.se):
                w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]] + [self.values.shape[0]])
        return path

    def summary(self) -> dict:
        return {
            "config": self.config,
            "failures": self.failures,
            "fit": None if self.fit is None else self.fit.to_json(),
            "note": self.note,
        }


def _run_samples(n_samples, stat, threads: int = 1, max_fail_rate=0.01):
    """Evaluate ``stat(k)`` for every realization ``k``; results ordered by ``k``."""

    def guarded(k):
        try:
            return stat(k)
        except SolverError as exc:
            log.warning("sample %d failed: %s", k, exc)
            return exc

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(guarded, range(n_samples)))
    else:
        results = [guarded(k) for k in range(n_samples)]
    errors = [r for r in results if isinstance(r, SolverError)]
    if len(errors) > max_fail_rate * n_samples:
        raise errors[0]
    return np.asarray([r for r in results if not isinstance(r, SolverError)]), len(errors)


def fractional_moment_sweep(
    cfg: FractionalMomentConfig, model: WalkModel, fit_range=None, threads: int = 1
) -> SweepResult:
    """Monte Carlo estimate of ``E |G(x, y; z)|^s`` against ``|x - y|``."""
    pairs = PairSet.axial(model.d, cfg.distances)

    def stat(k):
        U = model.restricted(cfg.L, cfg.seed, (k,))
        src, tgt = _pair_indices(U, pairs)
        out = np.empty((len(cfg.z_grid), len(cfg.distances)))
        for iz, z in enumerate(cfg.z_grid):
            cols = np.abs(Resolvent(U, z).columns(src)) ** cfg.s
            for j, t in enumerate(tgt):
                out[iz, j] = cols[t].mean()
        return out

    vals, failures = _run_samples(cfg.samples, stat, threads)
    res = SweepResult(np.asarray(cfg.distances), list(cfg.z_grid), vals, _config_json(cfg, model), failures)
    lo, hi = fit_range or (min(cfg.distances), max(cfg.distances))
    try:
        res.fit = res.fit_range(lo, hi)
        slopes = res.bootstrap_slope(lo, hi, cfg.bootstrap, cfg.seed + 1)
        if len(slopes):
            lo_s, hi_s = np.percentile(slopes, [2.5, 97.5])
            res.fit.gamma_ci = (float(-hi_s), float(-lo_s))
    except FitError as exc:
        res.note = "compact support" if np.all(res.mean[res.distances >= 2] == 0) else str(exc)
    return res


def _config_json(cfg, model: WalkModel) -> dict:
    out = {k: v for k, v in asdict(cfg).items() if k != "z_grid"}
    out["z_grid"] = [[z.real, z.imag] for z in cfg.z_grid]
    out["distances"] = list(cfg.distances)
    out["model"] = model.describe()
    return out


# ---------------------------------------------------------------------------
# eigenfunction correlator
# ---------------------------------------------------------------------------


class SpectralDecomposition:
    """Eigen-decomposition of a finite unitary, block by transition component.

    Basis states in different weakly connected components of the transition
    graph never mix, so the correlator between them is exactly zero.
    """

    def __init__(self, U: WalkOperator, cluster_tol: float = CLUSTER_TOL):
        M = U.matrix
        pattern = M.copy()
        pattern.data = np.ones(M.nnz)
        ncomp, self.component = connected_components(pattern, directed=True, connection="weak")
        dense = M.toarray()
        self.blocks = []
        for c in range(ncomp):
            idx = np.nonzero(self.component == c)[0]
            T, Z = sla.schur(dense[np.ix_(idx, idx)], output="complex")
            ev = np.diag(T).copy()
            off = np.linalg.norm(T - np.diag(ev))
            if off > 1e-8 * max(1.0, np.sqrt(len(idx))):
                raise np.linalg.LinAlgError(f"Schur form not diagonal (off-diagonal norm {off:.2e})")
            self.blocks.append((idx, ev, Z, _clusters(ev, cluster_tol)))
        self._where = {}
        for b, (idx, *_rest) in enumerate(self.blocks):
            for i, k in enumerate(idx):
                self._where[int(k)] = (b, i)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.concatenate([b[1] for b in self.blocks])

    def correlator_indices(self, a: int, bs) -> np.ndarray:
        """``sum_j |<a|P_j|b>|`` for every ``b`` in ``bs`` (operator basis positions)."""
        ba, ia = self._where[int(a)]
        out = np.zeros(len(bs))
        idx, ev, Z, clusters = self.blocks[ba]
        for n, b in enumerate(bs):
            bb, ib = self._where[int(b)]
            if bb != ba:
                continue
            prod = Z[ia, :] * Z[ib, :].conj()
            out[n] = sum(abs(prod[cl].sum()) for cl in clusters)
        return out


def _clusters(ev: np.ndarray, tol: float) -> list[np.ndarray]:
    ang = np.mod(np.angle(ev), 2 * np.pi)
    order = np.argsort(ang)
    groups, cur = [], [order[0]]
    for prev, nxt in zip(order[:-1], order[1:]):
        if abs(ev[nxt] - ev[prev]) <= tol:
            cur.append(nxt)
        else:
            groups.append(cur)
            cur = [nxt]
    groups.append(cur)
    if len(groups) > 1 and abs(ev[groups[0][0]] - ev[groups[-1][-1]]) <= tol:
        groups[0] = groups.pop() + groups[0]
    return [np.array(g) for g in groups]


def eigenfunction_correlator(U: WalkOperator, frm: BasisLabel, to: BasisLabel) -> float:
    """``sup_{|f| <= 1} |<frm| f(U) |to>| = sum_j |<frm|P_j|to>|`` for a finite unitary."""
    sd = SpectralDecomposition(U)
    return float(sd.correlator_indices(U.index_of(frm), [U.index_of(to)])[0])


def correlator_decay_experiment(
    model: WalkModel, L: int, samples: int, seed: int = 0, distances=None, fit_range=None, threads: int = 1
) -> SweepResult:
    """Disorder-averaged eigenfunction correlator against distance."""
    distances = tuple(distances or range(2, L // 2 + 1))
    pairs = PairSet.axial(model.d, distances)

    def stat(k):
        U = model.restricted(L, seed, (k,))
        src, tgt = _pair_indices(U, pairs)
        try:
            sd = SpectralDecomposition(U)
        except np.linalg.LinAlgError as exc:
            raise SolverError(str(exc), float("nan")) from exc
        rows = [np.concatenate([sd.correlator_indices(a, t) for a in src]) for t in tgt]
        return np.array([[r.mean() for r in rows]])

    vals, failures = _run_samples(samples, stat, threads)
    cfg = {"L": L, "samples": samples, "seed": seed, "distances": list(distances), "model": model.describe()}
    res = SweepResult(np.asarray(distances), [None], vals, cfg, failures)
    lo, hi = fit_range or (min(distances), max(distances))
    try:
        res.fit = res.fit_range(lo, hi)
    except FitError as exc:
        if np.all(res.mean == 0):
            res.note = "compact support"
            res.fit = DecayFit(float("inf"), 0.0, 1.0, (lo, hi), 0, status="compact support")
        else:
            res.note = str(exc)
    return res


# ---------------------------------------------------------------------------
# spectral gap probe
# ---------------------------------------------------------------------------


@dataclass
class GapProbeResult:
    etas: np.ndarray
    distances: np.ndarray  # dist(sigma(U^Lambda), z) per sample
    z: complex
    exact_oracle: bool

    @property
    def prob_gap(self) -> np.ndarray:
        """Empirical ``P(dist > eta)``."""
        return np.array([(self.distances > e).mean() for e in self.etas])

    @property
    def prob_close(self) -> np.ndarray:
        return 1.0 - self.prob_gap

    def wilson(self, level: float = 0.95) -> np.ndarray:
        n = len(self.distances)
        out = []
        for e in self.etas:
            k = int(np.count_nonzero(self.distances > e))
            ci = binomtest(k, n).proportion_ci(confidence_level=level, method="wilson")
            out.append((ci.low, ci.high))
        return np.array(out)

    def rows(self):
        ci = self.wilson()
        for e, p, (lo, hi) in zip(self.etas, self.prob_gap, ci):
            yield {"eta": float(e), "p_gap": float(p), "wilson_low": float(lo), "wilson_high": float(hi), "n": len(self.distances)}


def _oracle_orbits(model: WalkModel, L: int) -> np.ndarray:
    U = model.restricted(L, 0, (0,)) if model.dist.kind != "zero" else model.restricted(L, 0)
    orbits = orbit_partition(U.region, U.indices, model.pi)
    return np.array(orbits)


def spectral_gap_probe(
    model: WalkModel, L: int, z: complex, etas, samples: int, seed: int = 0, use_oracle: bool | None = None
) -> GapProbeResult:
    """Empirical law of ``dist(sigma(U^Lambda_omega(C)), z)``.

    For ``C = C_pi`` the spectra come from the exact orbit formula unless
    ``use_oracle=False``; otherwise each restriction is diagonalized.
    """
    etas = np.asarray(etas, dtype=float)
    if np.any(etas < 0):
        raise ValueError("eta must be >= 0")
    z = complex(z)
    if use_oracle is None:
        use_oracle = model.is_localized_reference
    if use_oracle and not model.is_localized_reference:
        raise ValueError("the exact orbit oracle only applies to C = C_pi")
    dists = np.empty(samples)
    if use_oracle:
        orbits = _oracle_orbits(model, L)
        nc = 2 * model.d
        roots = np.exp(2j * np.pi * np.arange(nc) / nc)
        s_idx, c_idx = np.divmod(orbits, nc)
        for k in range(samples):
            ang = model.phases(L, seed, (k,)).values
            alpha = ang[s_idx, c_idx].sum(axis=1)
            ev = (np.exp(1j * alpha / nc)[:, None] * roots[None, :]).ravel()
            dists[k] = np.min(np.abs(ev - z))
    else:
        for k in range(samples):
            ev = np.linalg.eigvals(model.restricted(L, seed, (k,)).dense())
            dists[k] = np.min(np.abs(ev - z))
    return GapProbeResult(etas, dists, z, bool(use_oracle))


def finite_volume_table(
    pi_model: WalkModel, Ls, betas, s: float, z: complex, samples: int, seed: int = 0, distance: int = 2
) -> list[dict]:
    """``E |G^Lambda|^s`` at ``|x - y| = distance`` with ``||C - C_pi|| = L^-beta``.

    Diagnostic table only; no bound is asserted.
    """
    rows = []
    pairs = PairSet.axial(pi_model.d, (distance,))
    for L in Ls:
        for beta in betas:
            eta = float(L) ** (-beta)
            m = WalkModel(perturbed_coin(pi_model.pi, min(eta, 2.0), seed), pi_model.pi, pi_model.dist)
            acc = []
            for k in range(samples):
                U = m.restricted(L, seed, (k,))
                src, (tgt,) = _pair_indices(U, pairs)
                cols = np.abs(Resolvent(U, z).columns(src)) ** s
                acc.append(cols[tgt].mean())
            acc = np.asarray(acc)
            rows.append(
                {
                    "L": int(L),
                    "beta": float(beta),
                    "eta": eta,
                    "mean": float(acc.mean()),
                    "se": float(acc.std(ddof=1) / np.sqrt(len(acc))) if len(acc) > 1 else float("nan"),
                }
            )
    return rows


def write_rows(rows, path) -> Path:
    path = Path(path)
    rows = list(rows)
    with path.open("w", newline="") as fh:
        if rows:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for r in rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return path


def dumps_fit(fit: DecayFit | None) -> str:
    return json.dumps(None if fit is None else fit.to_json())
