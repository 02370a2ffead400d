import numpy as np
import pytest
import scipy.sparse as sp
from scipy.stats import unitary_group

from conftest import sparse_unitarity_bound
from rqwloc.coins import CoinPermutation, hadamard_coin, permutation_coin, perturbed_coin
from rqwloc.disorder import CoverageError, sample_phases, zero_phases
from rqwloc.lattice import BasisLabel, CubeRegion, coin_indices, jump
from rqwloc.walk import (
    DiagonalPhaseOperator,
    DimensionError,
    WalkError,
    apply,
    build_bulk,
    build_collared,
    collared_window,
    complement_restriction,
    crossing_edges,
    export_coo,
    invariant_restriction,
    invariant_subspace,
    read_coo,
)


def _random_coin(d, rng):
    return unitary_group.rvs(2 * d, random_state=rng) if d > 0 else None


def test_matrix_elements_follow_definition(rng):
    reg = CubeRegion(2, 3)
    C = _random_coin(2, rng)
    f = sample_phases(reg, seed=4)
    U = build_bulk(C, f).matrix
    for x in [(0, 0), (1, -2), (3, 3)]:
        for si, sigma in enumerate(coin_indices(2)):
            col = reg.flat_index(BasisLabel(sigma, x))
            for ti, tau in enumerate(coin_indices(2)):
                y = tuple(((np.array(x) + jump(tau, 2) + 3) % 7) - 3)
                row = reg.flat_index(BasisLabel(tau, y))
                want = np.exp(1j * f.phase(tau, y)) * C[ti, si]
                assert U[row, col] == pytest.approx(want, abs=1e-15)
    # band structure: at most 2d nonzeros per column
    assert np.diff(U.indptr).max() <= 4


def test_zero_phase_translation_invariance(rng):
    reg = CubeRegion(2, 3)
    U = build_bulk(_random_coin(2, rng), region=reg).matrix.toarray()
    a = np.array([1, -2])
    for x, y in [((0, 0), (1, 0)), ((-1, 2), (-1, 1)), ((2, 2), (3, 2))]:
        for tau in coin_indices(2):
            for sigma in coin_indices(2):
                xs = tuple(((np.array(x) + a + 3) % 7) - 3)
                ys = tuple(((np.array(y) + a + 3) % 7) - 3)
                lhs = U[reg.flat_index(BasisLabel(tau, xs)), reg.flat_index(BasisLabel(sigma, ys))]
                rhs = U[reg.flat_index(BasisLabel(tau, x)), reg.flat_index(BasisLabel(sigma, y))]
                assert lhs == rhs


def test_swap_walk_two_periodic():
    pi = CoinPermutation.standard_cycle(1)
    reg = CubeRegion(1, 3)
    U = build_bulk(permutation_coin(pi), region=reg)
    psi = np.zeros(U.dim, complex)
    psi[reg.flat_index(BasisLabel(1, (0,)))] = 1
    one = apply(U, psi)
    target = np.zeros(U.dim, complex)
    target[reg.flat_index(BasisLabel(-1, (-1,)))] = 1
    np.testing.assert_array_equal(one, target)
    np.testing.assert_array_equal(apply(U, one), psi)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_factorization(d, rng):
    reg = CubeRegion(d, 2)
    C = _random_coin(d, rng)
    f = sample_phases(reg, seed=d)
    Uw = build_bulk(C, f).matrix
    U0 = build_bulk(C, region=reg).matrix
    D = DiagonalPhaseOperator(f).matrix()
    assert abs(Uw - D @ U0).max() <= 1e-12
    assert sparse_unitarity_bound(Uw) <= 1e-10


def test_coverage_error_for_mismatched_field():
    with pytest.raises(CoverageError):
        build_bulk(np.eye(2), sample_phases(CubeRegion(1, 2), seed=0), region=CubeRegion(1, 3))


def test_open_window_columns_flagged():
    reg = CubeRegion(1, 3, periodic=False)
    U = build_bulk(hadamard_coin(), region=reg)
    assert set(U.open_columns.tolist()) == {0, 1, 12, 13}


def test_collared_coin_assignment():
    pi = CoinPermutation.standard_cycle(2)
    C = perturbed_coin(pi, 0.2, 3)
    U = build_collared(C, zero_phases(collared_window(5, 2)), 5, pi)
    np.testing.assert_array_equal(U.coin_at((3, 0)), C)
    np.testing.assert_array_equal(U.coin_at((5, 1)), permutation_coin(pi))
    np.testing.assert_array_equal(U.coin_at((-4, 2)), permutation_coin(pi))
    np.testing.assert_array_equal(U.coin_at((6, 6)), permutation_coin(pi))
    np.testing.assert_array_equal(U.coin_at((7, 0)), C)


def test_collared_requires_bulk():
    with pytest.raises(WalkError):
        build_collared(np.eye(2), None, 2)


def test_collared_with_cpi_is_plain_cpi():
    pi = CoinPermutation.standard_cycle(2)
    f = sample_phases(collared_window(4, 2), seed=1)
    A = build_collared(permutation_coin(pi), f, 4, pi).matrix
    B = build_bulk(permutation_coin(pi), f).matrix
    assert abs(A - B).max() == 0


def test_collar_distance_linear_in_perturbation():
    # ||U_omega(C) - U^L_omega(C)|| <= c ||C - C_pi||, c stable across L and omega
    pi = CoinPermutation.standard_cycle(1)
    ratios = []
    for L in (8, 16, 32):
        for k, delta in enumerate((0.05, 0.1, 0.3)):
            C = perturbed_coin(pi, delta, k)
            f = sample_phases(collared_window(L, 1), seed=L, stream=(k,))
            diff = (build_bulk(C, f).matrix - build_collared(C, f, L, pi).matrix).toarray()
            ratios.append(np.linalg.norm(diff, 2) / delta)
    ratios = np.array(ratios)
    # the differing columns are exactly (C - C_pi) times unimodular phases
    np.testing.assert_allclose(ratios, 1.0, atol=1e-12)


def test_restriction_is_invariant_and_unitary():
    pi = CoinPermutation.standard_cycle(1)
    C = perturbed_coin(pi, 0.1, 0)
    U = build_collared(C, sample_phases(collared_window(8, 1), seed=2), 8, pi)
    inner = invariant_restriction(U)
    outer = complement_restriction(U)
    assert crossing_edges(U, inner.indices) == 0
    assert inner.dim + outer.dim == U.dim
    for R in (inner, outer):
        M = R.dense()
        assert np.linalg.norm(M.conj().T @ M - np.eye(R.dim), 2) <= 1e-10


@pytest.mark.parametrize("d, L", [(1, 3), (1, 8), (2, 3), (2, 5), (3, 3)])
def test_restriction_dimension_bounds(d, L):
    pi = CoinPermutation.standard_cycle(d)
    U = build_collared(perturbed_coin(pi, 0.3, 1), None, L, pi)
    keep = invariant_subspace(U, L)
    assert 2 * d * (2 * L + 1) ** d <= len(keep) <= 2 * d * (2 * L + 3) ** d
    assert np.all(U.region.state_norms[keep] <= L + 1)


def test_cpi_restriction_block_count():
    from rqwloc.localized import orbit_partition

    for d, L in [(1, 6), (2, 4)]:
        pi = CoinPermutation.standard_cycle(d)
        U = build_collared(permutation_coin(pi), sample_phases(collared_window(L, d), seed=0), L, pi)
        R = invariant_restriction(U)
        orbits = orbit_partition(U.region, R.indices, pi)
        assert sum(len(o) for o in orbits) == R.dim
        assert len(orbits) <= (2 * L + 3) ** d


def test_apply_properties(rng):
    pi = CoinPermutation.standard_cycle(2)
    U = build_bulk(perturbed_coin(pi, 0.5, 2), sample_phases(CubeRegion(2, 3), seed=5))
    M = U.matrix
    e = np.zeros(U.dim, complex)
    e[17] = 1
    np.testing.assert_allclose(apply(U, e), M[:, 17].toarray().ravel(), atol=1e-15)
    for _ in range(100):
        psi = rng.normal(size=U.dim) + 1j * rng.normal(size=U.dim)
        out = apply(U, psi)
        assert abs(np.linalg.norm(out) - np.linalg.norm(psi)) <= 1e-10 * np.linalg.norm(psi)
    np.testing.assert_allclose(apply(U, apply(U, psi, adjoint=True)), psi, atol=1e-10)
    with pytest.raises(DimensionError):
        apply(U, np.zeros(3))


def test_apply_on_restriction(rng):
    pi = CoinPermutation.standard_cycle(1)
    R = invariant_restriction(build_collared(perturbed_coin(pi, 0.2, 0), sample_phases(collared_window(5, 1), seed=1), 5, pi))
    psi = rng.normal(size=R.dim) + 0j
    np.testing.assert_allclose(apply(R, psi), R.dense() @ psi, atol=1e-14)


def test_finite_propagation_speed():
    pi = CoinPermutation.standard_cycle(2)
    U = build_bulk(perturbed_coin(pi, 0.7, 0), sample_phases(CubeRegion(2, 6), seed=3)).matrix
    e = np.zeros(U.shape[0], complex)
    reg = CubeRegion(2, 6)
    e[reg.flat_index(BasisLabel(1, (0, 0)))] = 1
    v = e
    for n in range(1, 6):
        v = U @ v
        nz = np.abs(v) > 0
        assert reg.state_norms[nz].max() <= n


def test_export_roundtrip(tmp_path):
    pi = CoinPermutation.standard_cycle(1)
    R = invariant_restriction(build_collared(perturbed_coin(pi, 0.2, 0), sample_phases(collared_window(4, 1), seed=1), 4, pi))
    path = export_coo(R, tmp_path / "op.csv")
    back = read_coo(path)
    assert abs(back - R.matrix).max() == 0
    assert isinstance(back, sp.csc_matrix)
