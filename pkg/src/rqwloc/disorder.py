"""Phase disorder: distributions, reproducible sampling, decorated coins."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .lattice import CubeRegion, coin_indices, coin_position, jump

TWO_PI = 2.0 * np.pi
N_BINS = 4096


class DisorderError(ValueError):
    pass


class CoverageError(DisorderError, KeyError):
    """A phase needed by an operator is not present in the field."""


def task_rng(master_seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for the task identified by ``stream``.

    Streams are keyed by ``(master_seed, *stream)`` through a Philox
    key, so adding tasks never perturbs existing ones.
    """
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, *[int(s) for s in stream]])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class PhaseDistribution:
    """Law of the i.i.d. phases on ``[0, 2pi)``.

    kind is one of ``"uniform"``, ``"tabulated"``, ``"zero"``.  A tabulated
    density is given on a uniform grid covering ``[0, 2pi]`` (endpoints
    included) and need not be normalized; sampling inverts its
    piecewise-linear CDF on ``N_BINS`` bins.
    """

    kind: str = "uniform"
    density: tuple[float, ...] | None = None
    _cdf: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)
    _grid: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)
    _pdf: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("uniform", "tabulated", "zero"):
            raise DisorderError(f"unknown phase distribution kind {self.kind!r}")
        if self.kind != "tabulated":
            return
        if self.density is None or len(self.density) < 2:
            raise DisorderError("tabulated distribution needs at least two density values")
        vals = np.asarray(self.density, dtype=float)
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise DisorderError("density must be finite and nonnegative")
        grid = np.linspace(0.0, TWO_PI, N_BINS + 1)
        dens = np.interp(grid, np.linspace(0.0, TWO_PI, len(vals)), vals)
        cells = 0.5 * (dens[1:] + dens[:-1]) * (grid[1] - grid[0])
        total = cells.sum()
        if not total > 0:
            raise DisorderError("density cannot be normalized (zero mass)")
        cdf = np.concatenate([[0.0], np.cumsum(cells) / total])
        object.__setattr__(self, "_cdf", cdf)
        object.__setattr__(self, "_grid", grid)
        object.__setattr__(self, "_pdf", vals / total)

    @classmethod
    def uniform(cls) -> "PhaseDistribution":
        return cls("uniform")

    @classmethod
    def zero(cls) -> "PhaseDistribution":
        return cls("zero")

    @classmethod
    def tabulated(cls, density) -> "PhaseDistribution":
        return cls("tabulated", tuple(float(v) for v in density))

    @property
    def has_density(self) -> bool:
        return self.kind != "zero"

    def pdf(self, theta) -> np.ndarray:
        theta = np.mod(np.asarray(theta, dtype=float), TWO_PI)
        if self.kind == "uniform":
            return np.full_like(theta, 1.0 / TWO_PI)
        if self.kind == "zero":
            raise DisorderError("the zero distribution has no density")
        return np.interp(theta, np.linspace(0.0, TWO_PI, len(self._pdf)), self._pdf)

    def cdf(self, theta) -> np.ndarray:
        theta = np.clip(np.asarray(theta, dtype=float), 0.0, TWO_PI)
        if self.kind == "uniform":
            return theta / TWO_PI
        if self.kind == "zero":
            return np.ones_like(theta)
        return np.interp(theta, self._grid, self._cdf)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(size)
        u = rng.random(size)
        if self.kind == "uniform":
            return TWO_PI * u
        return np.mod(np.interp(u, self._cdf, self._grid), TWO_PI)

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "tabulated":
            out["density"] = list(self.density)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "PhaseDistribution":
        if obj.get("kind") == "tabulated":
            return cls.tabulated(obj["density"])
        return cls(obj.get("kind", "uniform"))


@dataclass(frozen=True, eq=False)
class PhaseField:
    """Phases ``omega[tau, x]`` on a cube window, array-backed.

    ``values[s, c]`` is the phase of coin position ``c`` at site position
    ``s`` of ``region``.  Periodic regions wrap, so every jump target is
    covered.
    """

    region: CubeRegion
    values: np.ndarray
    distribution: PhaseDistribution = field(default_factory=PhaseDistribution)
    seed: int | None = None
    stream: tuple[int, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.region.nsites, self.region.ncoin):
            raise DisorderError(f"phase array shape {v.shape} != {(self.region.nsites, self.region.ncoin)}")
        v = np.mod(v, TWO_PI)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.region.d

    def phase(self, tau: int, x) -> float:
        try:
            s = self.region.site_position(x)
        except IndexError as exc:
            raise CoverageError(str(exc)) from None
        return float(self.values[s, coin_position(tau, self.d)])

    def phase_at_shifted(self, tau: int, x) -> float:
        """``omega[tau, x + r(tau)]`` (wrapped on a periodic window)."""
        y = np.asarray(x) + np.asarray(jump(tau, self.d))
        if self.region.periodic:
            y = (y + self.region.radius) % self.region.side - self.region.radius
        return self.phase(tau, tuple(int(v) for v in y))

    def exp_values(self) -> np.ndarray:
        return np.exp(1j * self.values)

    def __eq__(self, other):
        return (
            isinstance(other, PhaseField)
            and self.region == other.region
            and np.array_equal(self.values, other.values)
        )

    def to_json(self, include_values: bool = False) -> dict:
        out = {
            "d": self.region.d,
            "radius": self.region.radius,
            "periodic": self.region.periodic,
            "distribution": self.distribution.to_json(),
            "seed": self.seed,
            "stream": list(self.stream),
        }
        if include_values:
            out["values"] = self.values.tolist()
        return out

    def dumps(self, include_values: bool = False) -> str:
        return json.dumps(self.to_json(include_values))

    @classmethod
    def from_json(cls, obj: dict) -> "PhaseField":
        region = CubeRegion(int(obj["d"]), int(obj["radius"]), bool(obj.get("periodic", True)))
        dist = PhaseDistribution.from_json(obj.get("distribution", {"kind": "uniform"}))
        if "values" in obj:
            return cls(region, np.asarray(obj["values"]), dist, obj.get("seed"), tuple(obj.get("stream", ())))
        if obj.get("seed") is None:
            raise DisorderError("cannot regenerate phases without a seed")
        return sample_phases(region, dist, obj["seed"], tuple(obj.get("stream", ())))

    @classmethod
    def loads(cls, text: str) -> "PhaseField":
        return cls.from_json(json.loads(text))


def sample_phases(region: CubeRegion, dist: PhaseDistribution | None = None, seed: int = 0, stream=()) -> PhaseField:
    """Draw i.i.d. phases for every ``(tau, x)`` of ``region``."""
    dist = dist or PhaseDistribution.uniform()
    rng = task_rng(seed, *stream)
    vals = dist.sample(rng, (region.nsites, region.ncoin))
    return PhaseField(region, vals, dist, int(seed), tuple(int(s) for s in stream))


def zero_phases(region: CubeRegion) -> PhaseField:
    return PhaseField(region, np.zeros((region.nsites, region.ncoin)), PhaseDistribution.zero(), None)


def decorate_coin(C: np.ndarray, omega: PhaseField, x) -> np.ndarray:
    """``C_omega(x)[tau, sigma] = exp(i omega[tau, x + r(tau)]) C[tau, sigma]``."""
    C = np.asarray(C, dtype=np.complex128)
    d = omega.d
    if C.shape != (2 * d, 2 * d):
        raise DisorderError(f"coin shape {C.shape} does not match d={d}")
    row_phase = np.array([np.exp(1j * omega.phase_at_shifted(t, x)) for t in coin_indices(d)])
    return row_phase[:, None] * C
