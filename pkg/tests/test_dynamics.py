import numpy as np
import pytest

from rqwloc.coins import CoinPermutation, hadamard_coin, permutation_coin, perturbed_coin, tr_coin
from rqwloc.disorder import PhaseDistribution, sample_phases
from rqwloc.dynamics import (
    TransportSeries,
    averaged_transport,
    basis_state,
    evolve,
    free_space_operator,
    growth_exponent,
    localized_state,
    moment_series,
    position_moment,
    support_radius,
    transport_series,
    transport_window,
)
from rqwloc.lattice import BasisLabel, CubeRegion
from rqwloc.walk import DimensionError, build_bulk, invariant_restriction


def test_position_moment_examples():
    reg = CubeRegion(1, 4)
    norms = reg.state_norms.astype(float)
    psi = np.zeros(reg.dim, complex)
    psi[reg.flat_index(BasisLabel(1, (0,)))] = 1
    assert position_moment(psi, norms, 1.0) == 0.0
    psi[:] = 0
    psi[reg.flat_index(BasisLabel(-1, (3,)))] = 1
    assert position_moment(psi, norms, 0.5) == pytest.approx(np.sqrt(3))
    psi[:] = 0
    psi[reg.flat_index(BasisLabel(1, (-1,)))] = 1 / np.sqrt(2)
    psi[reg.flat_index(BasisLabel(1, (3,)))] = 1 / np.sqrt(2)
    assert position_moment(psi, norms, 1.0) == pytest.approx(np.sqrt(5), abs=1e-14)
    with pytest.raises(ValueError):
        position_moment(psi, norms, -1)


def test_evolve_zero_steps_and_period_two():
    pi = CoinPermutation.standard_cycle(1)
    U = build_bulk(permutation_coin(pi), region=CubeRegion(1, 4))
    psi = basis_state(U, BasisLabel(1, (0,)))
    np.testing.assert_array_equal(evolve(U, psi, 0), psi)
    np.testing.assert_array_equal(evolve(U, psi, 2), psi)
    assert not np.array_equal(evolve(U, psi, 1), psi)
    with pytest.raises(DimensionError):
        evolve(U, np.zeros(3), 1)


def test_negative_steps_invert(rng):
    U = build_bulk(perturbed_coin(CoinPermutation.standard_cycle(2), 0.4, 1), sample_phases(CubeRegion(2, 4), seed=3))
    psi = rng.normal(size=U.dim) + 1j * rng.normal(size=U.dim)
    np.testing.assert_allclose(evolve(U, evolve(U, psi, 7), -7), psi, atol=1e-12)


def test_norm_preserved_long_horizon():
    C = perturbed_coin(CoinPermutation.standard_cycle(1), 0.3, 0)
    U = free_space_operator(C, 50, CoinPermutation.standard_cycle(1), PhaseDistribution.uniform(), seed=2)
    psi = basis_state(U, BasisLabel(1, (0,)))
    out = evolve(U, psi, 10**4)
    assert abs(np.linalg.norm(out) - 1) <= 1e-8


def test_finite_speed_on_moments():
    U = free_space_operator(hadamard_coin(), 40)
    psi = basis_state(U, BasisLabel(1, (2,)))
    m = moment_series(U, psi, 40, 1.0)
    assert np.all(m <= 2 + np.arange(41) + 1e-12)
    assert support_radius(evolve(U, psi, 10), U.state_norms) <= 12


def test_kernel_and_matvec_paths_agree():
    pi = CoinPermutation.standard_cycle(2)
    U = free_space_operator(perturbed_coin(pi, 0.3, 4), 20, pi, PhaseDistribution.uniform(), seed=5)
    psi = basis_state(U, BasisLabel(-2, (0, 0)))
    fast = moment_series(U, psi, 20, 1.0)
    R = invariant_restriction(U)
    slow = moment_series(R, basis_state(R, BasisLabel(-2, (0, 0))), 20, 1.0)
    np.testing.assert_allclose(fast, slow, atol=1e-12)


def test_cpi_moments_periodic():
    for d in (1, 2):
        pi = CoinPermutation.standard_cycle(d)
        U = free_space_operator(permutation_coin(pi), 40, pi)
        psi = localized_state(U, {BasisLabel(1, (0,) * d): 1.0, BasisLabel(-1, (1,) + (0,) * (d - 1)): 1j})
        m = moment_series(U, psi, 40, 1.0)
        np.testing.assert_allclose(m[2 * d :], m[: -2 * d], atol=1e-8)


def test_growth_exponent_on_power_laws():
    n = np.arange(201, dtype=float)
    e, fit = growth_exponent(3 * n**1.5)
    assert e == pytest.approx(1.5, abs=1e-10)
    assert growth_exponent(np.ones(100))[0] == 0.0
    assert growth_exponent(np.zeros(100))[0] == 0.0


def test_transport_series_contrast():
    U = free_space_operator(hadamard_coin(), 200)
    psi = basis_state(U, BasisLabel(1, (0,)))
    ser = transport_series(U, psi, 200)
    assert abs(ser.exponent - 1) < 0.1
    with pytest.raises(ValueError):
        transport_series(U, psi, 10)


def test_transport_outputs(tmp_path):
    ser = TransportSeries(1.0, np.array([0.0, 1.0, 1.0]), 0.0, 1.0, {"r2": 1.0})
    path = ser.to_csv(tmp_path / "t.csv")
    assert path.read_text().splitlines()[0] == "n,moment"
    assert '"K_omega": 1.0' in ser.to_json()


def test_window_rule():
    assert transport_window(100, 2) == 105
    assert transport_window(0) == 3


def test_bounded_moments_under_disorder():
    mean, runs = averaged_transport(tr_coin(0.6, 0.8), 1000, 1.0, 20, seed=11, dist=PhaseDistribution.uniform())
    assert len(runs) == 20
    assert mean[500:].max() < 1.1 * mean[:501].max()
