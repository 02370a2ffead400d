"""One-step walk operators on finite cube windows.

``U_omega(C)`` maps ``|sigma, x>`` to
``sum_tau exp(i omega[tau, x + r(tau)]) C(x)[tau, sigma] |tau, x + r(tau)>``.
Windows are periodic cubes by default, which keeps every assembled
operator exactly unitary; with ``periodic=False`` jumps leaving the window
are dropped and the affected columns are listed in ``open_columns``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import _accel
from .coins import CoinPermutation, check_unitary, permutation_coin
from .disorder import CoverageError, PhaseField, zero_phases
from .lattice import BasisLabel, CubeRegion


class WalkError(ValueError):
    pass


class DimensionError(WalkError):
    pass


@dataclass(frozen=True, eq=False)
class DiagonalPhaseOperator:
    """``D_omega = diag(exp(i omega[tau, x]))`` on a window."""

    phases: PhaseField

    @cached_property
    def diagonal(self) -> np.ndarray:
        return self.phases.exp_values().reshape(-1)

    def matrix(self) -> sp.csr_matrix:
        return sp.diags(self.diagonal, format="csr")

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return self.diagonal * psi


@dataclass(frozen=True, eq=False)
class WalkOperator:
    """A walk unitary on a cube window, or its restriction to a basis subset.

    Attributes
    ----------
    region : window the operator was assembled on
    coins : distinct coin matrices, shape ``(K, 2d, 2d)``
    coin_id : coin used at each site, shape ``(nsites,)``
    phase : ``exp(i omega)``, shape ``(nsites, 2d)``
    indices : window flat indices spanning the operator's space, or ``None``
        for the whole window
    """

    region: CubeRegion
    coins: np.ndarray
    coin_id: np.ndarray
    phase: np.ndarray
    indices: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.region.d

    @property
    def dim(self) -> int:
        return self.region.dim if self.indices is None else len(self.indices)

    @property
    def is_restricted(self) -> bool:
        return self.indices is not None

    @cached_property
    def window_matrix(self) -> sp.csc_matrix:
        """Sparse matrix of the full-window operator (column compressed)."""
        reg = self.region
        nc = reg.ncoin
        nbr = reg.neighbors
        s_idx, c_idx, j_idx = np.meshgrid(np.arange(reg.nsites), np.arange(nc), np.arange(nc), indexing="ij")
        dest = nbr[s_idx, c_idx]
        ok = dest >= 0
        dest_safe = np.where(ok, dest, 0)
        vals = self.phase[dest_safe, c_idx] * self.coins[self.coin_id[s_idx], c_idx, j_idx]
        keep = ok & (vals != 0)
        rows = dest_safe[keep] * nc + c_idx[keep]
        cols = s_idx[keep] * nc + j_idx[keep]
        M = sp.csc_matrix((vals[keep], (rows, cols)), shape=(reg.dim, reg.dim))
        M.sort_indices()
        return M

    @cached_property
    def matrix(self) -> sp.csc_matrix:
        M = self.window_matrix
        if self.indices is None:
            return M
        return M[self.indices][:, self.indices].tocsc()

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    @cached_property
    def open_columns(self) -> np.ndarray:
        """Window flat indices whose image leaves an open (non-periodic) window."""
        if self.region.periodic:
            return np.zeros(0, dtype=np.int64)
        bad_sites = np.nonzero(np.any(self.region.neighbors < 0, axis=1))[0]
        nc = self.region.ncoin
        return (bad_sites[:, None] * nc + np.arange(nc)[None, :]).reshape(-1)

    def labels(self) -> list[BasisLabel]:
        idx = range(self.region.dim) if self.indices is None else self.indices
        return [self.region.label(int(k)) for k in idx]

    def index_of(self, label: BasisLabel) -> int:
        """Position of ``label`` in this operator's basis."""
        k = self.region.flat_index(label)
        if self.indices is None:
            return k
        pos = self._positions.get(k)
        if pos is None:
            raise WalkError(f"{label} is not in the operator's subspace")
        return pos

    def contains(self, label: BasisLabel) -> bool:
        try:
            self.index_of(label)
        except (WalkError, IndexError):
            return False
        return True

    @cached_property
    def _positions(self) -> dict[int, int]:
        return {int(k): i for i, k in enumerate(self.indices)}

    @cached_property
    def state_norms(self) -> np.ndarray:
        n = self.region.state_norms
        return n if self.indices is None else n[self.indices]

    def coin_at(self, x) -> np.ndarray:
        return self.coins[self.coin_id[self.region.site_position(x)]]

    def kernel_args(self):
        return (np.ascontiguousarray(self.coins), self.coin_id, self.region.neighbors, self.phase)


def _check_field(omega: PhaseField, region: CubeRegion):
    if omega.region != region:
        raise CoverageError(
            f"phase field covers radius {omega.region.radius} (periodic={omega.region.periodic}), "
            f"operator window needs radius {region.radius} (periodic={region.periodic})"
        )


def build_bulk(C: np.ndarray, omega: PhaseField | None = None, region: CubeRegion | None = None) -> WalkOperator:
    """``U_omega(C)`` with the same coin at every site of the window."""
    C = check_unitary(C)
    if region is None:
        if omega is None:
            raise WalkError("need a region or a phase field")
        region = omega.region
    if C.shape[0] != region.ncoin:
        raise WalkError(f"coin size {C.shape[0]} != 2d = {region.ncoin}")
    omega = zero_phases(region) if omega is None else omega
    _check_field(omega, region)
    return WalkOperator(
        region=region,
        coins=C[None, :, :].copy(),
        coin_id=np.zeros(region.nsites, dtype=np.int64),
        phase=omega.exp_values(),
        meta={"kind": "bulk", "d": region.d, "seed": omega.seed, "stream": list(omega.stream)},
    )


def collared_window(L: int, d: int) -> CubeRegion:
    return CubeRegion(d, L + 2, periodic=True)


def collar_coin_ids(region: CubeRegion, L: int) -> np.ndarray:
    """1 on the shells ``|x| in {L-1, L, L+1}`` (coin ``C_pi``), 0 elsewhere."""
    n = region.site_norms
    return ((n >= L - 1) & (n <= L + 1)).astype(np.int64)


def build_collared(C: np.ndarray, omega: PhaseField | None, L: int, pi: CoinPermutation | None = None) -> WalkOperator:
    """``U^L_omega(C)``: coin ``C_pi`` on the shells ``L-1, L, L+1`` and ``C`` elsewhere.

    The window is the periodic cube of radius ``L + 2``.
    """
    if L < 3:
        raise WalkError(f"collared operator needs L >= 3, got {L}")
    C = check_unitary(C)
    d = C.shape[0] // 2
    pi = pi or CoinPermutation.standard_cycle(d)
    if pi.d != d:
        raise WalkError("permutation and coin dimension disagree")
    region = collared_window(L, d)
    omega = zero_phases(region) if omega is None else omega
    _check_field(omega, region)
    return WalkOperator(
        region=region,
        coins=np.stack([C, permutation_coin(pi)]),
        coin_id=collar_coin_ids(region, L),
        phase=omega.exp_values(),
        meta={"kind": "collared", "d": d, "L": L, "pi": pi.to_json(), "seed": omega.seed, "stream": list(omega.stream)},
    )


def transition_components(U: WalkOperator) -> np.ndarray:
    """Weakly connected component label of every window basis state."""
    M = U.window_matrix
    pattern = sp.csc_matrix((np.ones(M.nnz), M.indices, M.indptr), shape=M.shape)
    _, labels = connected_components(pattern, directed=True, connection="weak")
    return labels


def invariant_subspace(U: WalkOperator, L: int) -> np.ndarray:
    """Window indices of the closure of ``{|tau, x>: |x| <= L}`` under the transition graph."""
    labels = transition_components(U)
    norms = U.region.state_norms
    seeds = np.unique(labels[norms <= L])
    keep = np.nonzero(np.isin(labels, seeds))[0]
    if np.any(norms[keep] >= U.region.radius):
        raise WalkError(
            f"invariant closure reaches the window edge (radius {U.region.radius}); the collar does not confine"
        )
    return keep


def _restrict(U: WalkOperator, keep: np.ndarray, kind: str) -> WalkOperator:
    meta = dict(U.meta, restriction=kind)
    return WalkOperator(U.region, U.coins, U.coin_id, U.phase, np.asarray(keep, dtype=np.int64), meta)


def invariant_restriction(U: WalkOperator, L: int | None = None) -> WalkOperator:
    """Restriction of a collared operator to its invariant block ``H^Lambda``."""
    if U.is_restricted:
        raise WalkError("operator is already restricted")
    L = U.meta.get("L") if L is None else L
    if L is None:
        raise WalkError("need L for a non-collared operator")
    return _restrict(U, invariant_subspace(U, L), "inner")


def complement_restriction(U: WalkOperator, L: int | None = None) -> WalkOperator:
    L = U.meta.get("L") if L is None else L
    inner = invariant_subspace(U, L)
    mask = np.ones(U.region.dim, dtype=bool)
    mask[inner] = False
    return _restrict(U, np.nonzero(mask)[0], "outer")


def crossing_edges(U: WalkOperator, keep: np.ndarray) -> int:
    """Number of nonzero transitions between ``keep`` and its complement."""
    M = U.window_matrix.tocoo()
    inside = np.zeros(U.region.dim, dtype=bool)
    inside[keep] = True
    return int(np.count_nonzero(inside[M.row] != inside[M.col]))


def apply(U: WalkOperator, psi: np.ndarray, adjoint: bool = False) -> np.ndarray:
    """``U psi`` (or ``U^* psi``) for a flat state vector in the operator's basis."""
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.shape != (U.dim,):
        raise DimensionError(f"state has shape {psi.shape}, operator dimension is {U.dim}")
    if U.is_restricted:
        M = U.matrix
        return (M.conj().T if adjoint else M) @ psi
    nc = U.region.ncoin
    src = psi.reshape(-1, nc)
    out = np.empty_like(src)
    kern = _accel.walk_step_adjoint if adjoint else _accel.walk_step
    kern(src, out, *U.kernel_args())
    return out.reshape(-1)


def export_coo(U: WalkOperator, path) -> Path:
    """Write the operator as CSV rows ``row, col, re, im`` (operator basis positions)."""
    path = Path(path)
    M = U.matrix.tocoo()
    order = np.lexsort((M.row, M.col))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "re", "im"])
        for k in order:
            v = M.data[k]
            w.writerow([int(M.row[k]), int(M.col[k]), repr(float(v.real)), repr(float(v.imag))])
    return path


def read_coo(path) -> sp.csc_matrix:
    rows, cols, vals = [], [], []
    with Path(path).open() as fh:
        for rec in csv.DictReader(fh):
            rows.append(int(rec["row"]))
            cols.append(int(rec["col"]))
            vals.append(complex(float(rec["re"]), float(rec["im"])))
    n = max(max(rows), max(cols)) + 1 if rows else 0
    return sp.csc_matrix((vals, (rows, cols)), shape=(n, n))
