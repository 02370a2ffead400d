import numpy as np
import pytest
from scipy import stats

from rqwloc.coins import CoinPermutation, perturbed_coin, unitarity_defect
from rqwloc.disorder import (
    CoverageError,
    DisorderError,
    PhaseDistribution,
    PhaseField,
    decorate_coin,
    sample_phases,
    task_rng,
    zero_phases,
)
from rqwloc.lattice import CubeRegion


def test_zero_distribution():
    f = sample_phases(CubeRegion(2, 2), PhaseDistribution.zero(), seed=1)
    assert np.all(f.values == 0)


def test_uniform_circular_mean_clt():
    vals = PhaseDistribution.uniform().sample(task_rng(5), 10**5)
    m = np.exp(1j * vals).mean()
    # each component has variance 1/2; 3 sigma bound on the sample mean
    sigma = np.sqrt(0.5 / 10**5)
    assert abs(m.real) < 3 * sigma and abs(m.imag) < 3 * sigma


def test_reproducible_from_seed():
    reg = CubeRegion(2, 3)
    a = sample_phases(reg, seed=11, stream=(4,))
    b = sample_phases(reg, seed=11, stream=(4,))
    c = sample_phases(reg, seed=11, stream=(5,))
    assert a == b
    assert not np.array_equal(a.values, c.values)


def test_task_streams_independent_of_task_count():
    first = [task_rng(7, k).random() for k in range(3)]
    more = [task_rng(7, k).random() for k in range(10)]
    assert first == more[:3]


@pytest.mark.parametrize(
    "dist",
    [
        PhaseDistribution.uniform(),
        PhaseDistribution.tabulated([1.0, 3.0, 0.5, 2.0, 1.0]),
        PhaseDistribution.tabulated(np.sin(np.linspace(0, np.pi, 50)) ** 2),
    ],
)
def test_ks_against_density(dist):
    x = dist.sample(task_rng(3), 10**4)
    res = stats.kstest(x, dist.cdf)
    assert res.pvalue > 0.01


def test_tabulated_rejects_zero_mass():
    with pytest.raises(DisorderError):
        PhaseDistribution.tabulated([0.0, 0.0, 0.0])
    with pytest.raises(DisorderError):
        PhaseDistribution.tabulated([1.0, -1.0, 1.0])


def test_tabulated_density_normalized():
    dist = PhaseDistribution.tabulated([2.0, 2.0])
    th = np.linspace(0, 2 * np.pi, 1001)
    assert np.trapezoid(dist.pdf(th), th) == pytest.approx(1.0, abs=1e-9)


def test_json_roundtrip_regenerates():
    f = sample_phases(CubeRegion(1, 5), PhaseDistribution.tabulated([1, 2, 1]), seed=9, stream=(2,))
    assert PhaseField.loads(f.dumps()) == f
    assert PhaseField.loads(f.dumps(include_values=True)) == f


def test_decorate_zero_phases_is_identity():
    C = perturbed_coin(CoinPermutation.standard_cycle(2), 0.3, 1)
    out = decorate_coin(C, zero_phases(CubeRegion(2, 2)), (0, 0))
    np.testing.assert_allclose(out, C)


def test_decorate_d1_substitution():
    reg = CubeRegion(1, 3)
    vals = np.zeros((reg.nsites, 2))
    phi1, phi2 = 0.7, -1.3
    vals[reg.site_position((2,)), 0] = phi1  # omega^{+1}_{x+1}, x = 1
    vals[reg.site_position((0,)), 1] = phi2  # omega^{-1}_{x-1}
    f = PhaseField(reg, vals)
    a, b, c, d = 0.1 + 0.2j, 0.3, -0.4j, 0.5
    C = np.array([[a, b], [c, d]])
    got = decorate_coin(C, f, (1,))
    e1, e2 = np.exp(1j * phi1), np.exp(1j * phi2)
    np.testing.assert_allclose(got, [[e1 * a, e1 * b], [e2 * c, e2 * d]], atol=1e-15)


def test_decorate_preserves_unitarity(rng):
    from scipy.stats import unitary_group

    reg = CubeRegion(3, 2)
    C = unitary_group.rvs(6, random_state=rng)
    f = sample_phases(reg, seed=2)
    for x in [(0, 0, 0), (2, -2, 1), (-2, 2, 2)]:
        assert unitarity_defect(decorate_coin(C, f, x)) <= 1e-10


def test_coverage_error():
    f = sample_phases(CubeRegion(1, 2, periodic=False), seed=0)
    with pytest.raises(CoverageError):
        decorate_coin(np.eye(2), f, (2,))
