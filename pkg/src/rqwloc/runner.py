"""Orchestration of the experiment subcommands and their on-disk outputs.

Layout of one run directory::

    manifest.json      config hash, versions, timestamps, task seeds, file inventory
    summary.json       headline numbers of the run
    results/*.csv      plot-ready tables
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy.stats import unitary_group

from . import __version__, _accel
from .config import ExperimentConfig
from .dynamics import averaged_transport, growth_exponent
from .green import (
    FractionalMomentConfig,
    correlator_decay_experiment,
    fractional_moment_sweep,
    spectral_gap_probe,
    write_rows,
)
from .localized import orbit_partition, orbit_spectrum
from .model import WalkModel
from .probe import conditional_moment_check, graf_diagnostic, poisson_error_ladder

log = logging.getLogger(__name__)

SUBCOMMANDS = ("spectrum", "transport", "green", "correlator", "gap", "appendix")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# subcommands: each returns a summary dict and writes CSVs into results/
# ---------------------------------------------------------------------------


def orbit_block_errors(model: WalkModel, L: int, seed: int, stream) -> np.ndarray:
    """Max eigenvalue mismatch of every orbit block against the closed form."""
    U = model.restricted(L, seed, stream)
    M = U.window_matrix
    ang = np.angle(U.phase)
    nc = 2 * model.d
    pos = {int(k): i for i, k in enumerate(U.indices)}
    errs = []
    for orb in orbit_partition(U.region, U.indices, model.pi):
        block = M[orb][:, orb].toarray()
        numeric = np.linalg.eigvals(block)
        s, c = np.divmod(orb, nc)
        exact = orbit_spectrum(float(ang[s, c].sum()), model.d).eigenvalues
        dist = np.abs(numeric[:, None] - exact[None, :])
        errs.append(max(dist.min(axis=1).max(), dist.min(axis=0).max()))
        assert all(int(k) in pos for k in orb)
    return np.asarray(errs)


def run_spectrum(cfg: ExperimentConfig, results: Path, threads: int = 1) -> dict:
    model = WalkModel.localized(cfg.d, cfg.distribution(), cfg.permutation())
    rows = []
    for k in range(cfg.samples):
        errs = orbit_block_errors(model, cfg.L, cfg.seed, (k,))
        rows.append({"sample": k, "orbits": len(errs), "max_error": float(errs.max()), "match": bool(errs.max() <= 1e-10)})
    write_rows(rows, results / "orbit_spectra.csv")
    matched = sum(r["match"] for r in rows)
    return {
        "samples": cfg.samples,
        "matched": matched,
        "match_fraction": matched / cfg.samples,
        "max_error": max(r["max_error"] for r in rows),
        "tolerance": 1e-10,
    }


def run_transport(cfg: ExperimentConfig, results: Path, threads: int = 1) -> dict:
    model = cfg.model()
    mean, runs = averaged_transport(
        model.coin, cfg.N, cfg.p, cfg.samples if model.dist.kind != "zero" else 1, cfg.seed, model.dist, pi=model.pi
    )
    e, fit = growth_exponent(mean)
    with (results / "transport.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "moment"])
        for n, m in enumerate(mean):
            w.writerow([n, repr(float(m))])
    half = len(mean) // 2
    return {
        "exponent": e,
        "fit": fit,
        "K_omega": float(mean.max()),
        "per_realization_sup": [float(r.sup) for r in runs],
        "tail_growth": float(mean[half:].max() / mean[: half + 1].max()) if mean[: half + 1].max() > 0 else None,
        "delta": model.delta,
        "p": cfg.p,
        "N": cfg.N,
    }


def run_green(cfg: ExperimentConfig, results: Path, threads: int = 1) -> dict:
    model = cfg.model()
    distances = tuple(cfg.distances or range(2, cfg.L // 2 + 1))
    out = {"delta": model.delta, "sweeps": {}}
    for s in cfg.s_list:
        fm = FractionalMomentConfig(
            s=s, samples=cfg.samples, z_grid=cfg.z_grid.values(), distances=distances, L=cfg.L, seed=cfg.seed
        )
        res = fractional_moment_sweep(fm, model, threads=threads)
        res.to_csv(results / f"fractional_moments_s{s:g}.csv")
        out["sweeps"][f"{s:g}"] = res.summary()
    return out


def run_correlator(cfg: ExperimentConfig, results: Path, threads: int = 1) -> dict:
    model = cfg.model()
    samples = cfg.samples if model.dist.kind != "zero" else 1
    res = correlator_decay_experiment(model, cfg.L, samples, cfg.seed, cfg.distances, threads=threads)
    res.to_csv(results / "correlator.csv")
    return {"delta": model.delta, **res.summary()}


def linearity_report(etas: np.ndarray, prob: np.ndarray) -> dict:
    """Best constant ``c`` for ``P ~ c * eta`` (log least squares) and the spread around it."""
    ok = (etas > 0) & (prob > 0)
    if np.count_nonzero(ok) < 2:
        return {"c": None, "max_factor": None, "loglog_slope": None}
    ratio = prob[ok] / etas[ok]
    c = float(np.exp(np.mean(np.log(ratio))))
    factor = np.maximum(ratio / c, c / ratio)
    slope = float(np.polyfit(np.log(etas[ok]), np.log(prob[ok]), 1)[0])
    return {"c": c, "max_factor": float(factor.max()), "loglog_slope": slope}


def run_gap(cfg: ExperimentConfig, results: Path, threads: int = 1) -> dict:
    model = cfg.model()
    z = complex(*cfg.gap_z)
    res = spectral_gap_probe(model, cfg.L, z, cfg.etas, cfg.samples, cfg.seed)
    write_rows(res.rows(), results / "gap_probe.csv")
    return {
        "z": z,
        "exact_oracle": res.exact_oracle,
        "p_close": res.prob_close.tolist(),
        "etas": res.etas.tolist(),
        "linearity": linearity_report(res.etas, res.prob_close),
    }


def run_appendix(cfg: ExperimentConfig, results: Path, threads: int = 1) -> dict:
    ladder = []
    for k in range(cfg.poisson_instances):
        M = unitary_group.rvs(cfg.poisson_dim, random_state=np.random.default_rng([cfg.seed, 0xA99, k]))
        for f in ("one", "z", "z2"):
            for row in poisson_error_ladder(M, f, cfg.poisson_radii, cfg.poisson_grid):
                ladder.append({"instance": k, **row})
    write_rows(ladder, results / "poisson_convergence.csv")

    model = cfg.model()
    s = cfg.s_list[0]
    zs = cfg.z_grid.values()
    graf_rows, fitted = [], {}
    for L in cfg.graf_L:
        table = graf_diagnostic(model, L, zs, cfg.samples, s, cfg.seed)
        graf_rows.extend(table.rows())
        fitted[L] = table.fitted_K
    write_rows(graf_rows, results / "graf.csv")

    cond = []
    if model.dist.has_density:
        for eps in cfg.conditional_eps:
            for sign in (-1, 1):
                r = conditional_moment_check(model, 1 + sign * eps, min(cfg.samples, 20), L=min(cfg.L, 8), s=s, seed=cfg.seed)
                cond.append({"abs_z": 1 + sign * eps, "max": r["max"], "mean": r["mean"]})
        write_rows(cond, results / "conditional_moment.csv")

    worst = {}
    for row in ladder:
        key = (row["f"], row["r"])
        worst[key] = max(worst.get(key, 0.0), row["error"])
    k_vals = [v for v in fitted.values() if np.isfinite(v) and v > 0]
    return {
        "poisson_max_error": {f"{f}@{r}": e for (f, r), e in sorted(worst.items())},
        "graf_fitted_K": fitted,
        "graf_K_spread": (max(k_vals) / min(k_vals)) if k_vals else None,
        "conditional": cond,
    }


RUNNERS = {
    "spectrum": run_spectrum,
    "transport": run_transport,
    "green": run_green,
    "correlator": run_correlator,
    "gap": run_gap,
    "appendix": run_appendix,
}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(subcommand: str, cfg: ExperimentConfig, out_dir: Path, threads: int = 1) -> dict:
    if subcommand not in RUNNERS:
        raise ValueError(f"unknown subcommand {subcommand!r}; choose from {SUBCOMMANDS}")
    out_dir = Path(out_dir)
    results = out_dir / "results"
    results.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    summary = RUNNERS[subcommand](cfg, results, threads)
    summary = {"subcommand": subcommand, "config_sha256": cfg.digest(), "master_seed": cfg.seed, **summary}
    write_json(out_dir / "summary.json", summary)
    files = sorted(p for p in out_dir.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {
        "config_sha256": cfg.digest(),
        "config": json.loads(cfg.canonical()),
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "kernel_backend": _accel.backend(),
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "seeding": {
            "scheme": "Philox(SeedSequence([master_seed, task_index]))",
            "master_seed": cfg.seed,
            "tasks": cfg.samples,
        },
        "files": {str(p.relative_to(out_dir)): _sha256(p) for p in files},
    }
    write_json(out_dir / "manifest.json", manifest)
    return summary
