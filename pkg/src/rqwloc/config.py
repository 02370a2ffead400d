"""Experiment configuration: JSON with comments, validated by pydantic."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .coins import CoinPermutation, check_unitary, hadamard_coin, permutation_coin, perturbed_coin, tr_coin
from .disorder import PhaseDistribution
from .model import WalkModel

SCHEMA_VERSION = 1


def strip_comments(text: str) -> str:
    """Drop ``//`` and ``#`` comments that sit outside JSON strings."""
    out, i, n = [], 0, len(text)
    in_str = False
    while i < n:
        ch = text[i]
        if in_str:
            out.append(ch)
            if ch == "\\" and i + 1 < n:
                out.append(text[i + 1])
                i += 1
            elif ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
            out.append(ch)
        elif ch == "#" or text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        else:
            out.append(ch)
        i += 1
    return "".join(out)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CoinSpec(_Strict):
    kind: Literal["permutation", "perturbed", "tr", "hadamard", "matrix"] = "perturbed"
    cycle: list[int] | None = None
    delta: float = Field(0.1, ge=0.0, le=2.0)
    t: float | None = None
    r: float | None = None
    matrix: list[list[list[float]]] | None = None
    seed: int = 0

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "tr" and (self.t is None or self.r is None):
            raise ValueError("coin kind 'tr' needs both t and r")
        if self.kind == "matrix" and self.matrix is None:
            raise ValueError("coin kind 'matrix' needs 'matrix' as [[[re, im], ...], ...]")
        return self


class PhaseSpec(_Strict):
    kind: Literal["uniform", "tabulated", "zero"] = "uniform"
    density: list[float] | None = None

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "tabulated" and not self.density:
            raise ValueError("tabulated phases need a density table")
        return self


class ZGrid(_Strict):
    eps: list[float] = Field(default_factory=lambda: [1e-3])
    angles: int = Field(8, ge=1)
    points: list[tuple[float, float]] | None = None

    @field_validator("eps")
    @classmethod
    def _eps(cls, v):
        if not v or any(not 0 < e < 1 for e in v):
            raise ValueError("every eps must lie in (0, 1)")
        return v

    def values(self) -> list[complex]:
        if self.points:
            zs = [complex(a, b) for a, b in self.points]
        else:
            ang = 2 * np.pi * np.arange(self.angles) / self.angles
            zs = [r * np.exp(1j * a) for e in self.eps for r in (1 - e, 1 + e) for a in ang]
        for z in zs:
            if abs(abs(z) - 1) < 1e-12:
                raise ValueError(f"z-grid point {z} lies on the unit circle")
        return zs


class ExperimentConfig(_Strict):
    schema_version: int = SCHEMA_VERSION
    d: int = Field(1, ge=1, le=3)
    L: int = Field(16, ge=3)
    coin: CoinSpec = Field(default_factory=CoinSpec)
    phases: PhaseSpec = Field(default_factory=PhaseSpec)
    s_list: list[float] = Field(default_factory=lambda: [0.5])
    z_grid: ZGrid = Field(default_factory=ZGrid)
    distances: list[int] | None = None
    N: int = Field(200, ge=16)
    p: float = Field(1.0, ge=0.0)
    samples: int = Field(50, ge=1)
    seed: int = Field(0, ge=0)
    # gap probe
    gap_z: tuple[float, float] = (1 - 1e-6, 0.0)
    etas: list[float] = Field(default_factory=lambda: [float(v) for v in 10.0 ** np.arange(-3.0, -0.99, 0.5)])
    # spectral probes (the "appendix" subcommand)
    poisson_radii: list[float] = Field(default_factory=lambda: [0.9, 0.99, 0.999])
    poisson_grid: int = Field(2**16, ge=64)
    poisson_dim: int = Field(64, ge=1, le=64)
    poisson_instances: int = Field(5, ge=1)
    graf_L: list[int] = Field(default_factory=lambda: [16, 32, 48])
    conditional_eps: list[float] = Field(default_factory=lambda: [1e-2, 1e-4])

    @field_validator("schema_version")
    @classmethod
    def _version(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v}; this build reads {SCHEMA_VERSION}")
        return v

    @field_validator("s_list")
    @classmethod
    def _s(cls, v):
        if not v:
            raise ValueError("s_list must not be empty")
        for s in v:
            if not 0.0 < s < 1.0:
                raise ValueError(f"s = {s} outside (0, 1)")
        return v

    @field_validator("distances")
    @classmethod
    def _dist(cls, v):
        if v is not None and any(k < 2 for k in v):
            raise ValueError("pair distances must be >= 2")
        return v

    @field_validator("etas")
    @classmethod
    def _etas(cls, v):
        if any(e < 0 for e in v):
            raise ValueError("eta must be >= 0")
        return v

    @field_validator("poisson_radii")
    @classmethod
    def _radii(cls, v):
        if any(not 0 < r < 1 for r in v):
            raise ValueError("Poisson radii must lie in (0, 1)")
        return v

    @model_validator(mode="after")
    def _cross(self):
        if self.distances is not None and max(self.distances) > self.L:
            raise ValueError(f"distances up to {max(self.distances)} exceed the cube radius L={self.L}")
        if self.coin.kind == "tr" and self.d != 1:
            raise ValueError("the (t, r) coin family exists only for d = 1")
        if self.coin.kind == "hadamard" and self.d != 1:
            raise ValueError("the Hadamard coin is the d = 1 member t = r = 1/sqrt(2)")
        return self

    # -- derived objects ------------------------------------------------------

    def permutation(self) -> CoinPermutation:
        if self.coin.cycle:
            return CoinPermutation.from_cycle(self.d, self.coin.cycle)
        return CoinPermutation.standard_cycle(self.d)

    def coin_matrix(self) -> np.ndarray:
        pi = self.permutation()
        c = self.coin
        if c.kind == "permutation":
            return permutation_coin(pi)
        if c.kind == "perturbed":
            return perturbed_coin(pi, c.delta, c.seed)
        if c.kind == "tr":
            return tr_coin(c.t, c.r)
        if c.kind == "hadamard":
            return hadamard_coin()
        arr = np.asarray(c.matrix, dtype=float)
        return check_unitary(arr[..., 0] + 1j * arr[..., 1])

    def distribution(self) -> PhaseDistribution:
        if self.phases.kind == "tabulated":
            return PhaseDistribution.tabulated(self.phases.density)
        return PhaseDistribution(self.phases.kind)

    def model(self) -> WalkModel:
        return WalkModel(self.coin_matrix(), self.permutation(), self.distribution())

    def canonical(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    text = Path(path).read_text()
    data = json.loads(strip_comments(text)) if text.strip() else {}
    if seed is not None:
        data["seed"] = seed
    return ExperimentConfig.model_validate(data)
