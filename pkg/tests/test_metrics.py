import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import stats

from mfglab.errors import EmptySample, SizeLimit, UndefinedRegime
from mfglab.metrics import (Gaussian, QuantileReference, RateQuery, empirical_tail, loglog_slope, mean_ci,
                            theoretical_rate, wasserstein2_1d, wasserstein2_exact_small)

# (N, M, k, p, hand-evaluated value); regime 1 needs p > M/2, regime 2 p = M/2, regime 3 M > 2p
RATE_TABLE = [
    (100, 1, 6, 2, 0.1 + 100 ** (-2 / 3)),
    (1, 1, 8, 2, 2.0),
    (10, 2, 3, 2, 10**-0.5 + 10 ** (-1 / 3)),
    (64, 3, 6, 2, 0.125 + 0.0625),
    (100, 4, 8, 2, 0.1 * math.log(101) + 100**-0.75),
    (1, 2, 3, 1, math.log(2) + 1.0),
    (16, 2, 4, 1, 0.25 * math.log(17) + 0.125),
    (1000, 6, 9, 3, 1000**-0.5 * math.log(1001) + 0.01),
    (10_000, 6, 8, 2, 10_000 ** (-1 / 3) + 0.001),
    (64, 3, 2, 1, 0.0625 + 0.125),
    (256, 8, 4, 2, 0.25 + 0.0625),
    (32, 5, 4, 1, 0.25 + 2**-3.75),
]
EXCLUDED = [(4, 4, 2), (1, 4, 2), (4, 4 / 3, 1), (2, 2, 1)]


@pytest.mark.parametrize("N,M,k,p,expected", RATE_TABLE)
def test_rate_table(N, M, k, p, expected):
    assert theoretical_rate(N=N, M=M, k=k, p=p) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_rate_table_covers_every_regime():
    regimes = [RateQuery(N, M, k, p).regime for N, M, k, p, _ in RATE_TABLE]
    assert regimes.count(1) == regimes.count(2) == regimes.count(3) == 4


@pytest.mark.parametrize("M,k,p", EXCLUDED)
def test_rate_boundaries_are_undefined(M, k, p):
    with pytest.raises(UndefinedRegime):
        theoretical_rate(N=10, M=M, k=k, p=p)


def test_rate_query_validation():
    with pytest.raises(ValueError):
        RateQuery(0, 1, 6)
    with pytest.raises(ValueError):
        RateQuery(10, 1, 2, 2)


# ---------------------------------------------------------------- Wasserstein

def test_w2_examples():
    assert wasserstein2_1d([0.3, -1.0, 2.0], [2.0, 0.3, -1.0]) == 0.0
    assert wasserstein2_1d([0.0, 1.0], [1.0, 2.0]) == pytest.approx(1.0)
    assert wasserstein2_1d(np.zeros(5), np.full(7, -2.5)) == pytest.approx(2.5)
    with pytest.raises(EmptySample):
        wasserstein2_1d([], [1.0])


def test_w2_unequal_sizes_match_replicated_samples():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=6), rng.normal(size=4)
    # replicating to the common size 12 gives an equal-weight equal-size pair
    oracle = np.sqrt(np.mean((np.sort(np.repeat(a, 2)) - np.sort(np.repeat(b, 3))) ** 2))
    assert wasserstein2_1d(a, b) == pytest.approx(oracle, abs=1e-14)


def test_w2_matches_assignment_oracle():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(1, 33))
        a, b = rng.normal(size=n), rng.standard_t(3, size=n)
        assert abs(wasserstein2_1d(a, b) - wasserstein2_exact_small(a, b)) <= 1e-12


def test_assignment_oracle_against_permutations():
    rng = np.random.default_rng(9)
    a, b = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    best = min(np.mean(np.sum((a - b[list(p)]) ** 2, axis=1)) for p in itertools.permutations(range(3)))
    assert wasserstein2_exact_small(a, b) == pytest.approx(np.sqrt(best), abs=1e-14)
    assert wasserstein2_exact_small([[1.0, 2.0]], [[4.0, 6.0]]) == pytest.approx(5.0)
    with pytest.raises(SizeLimit):
        wasserstein2_exact_small(np.zeros(65), np.zeros(65))
    with pytest.raises(SizeLimit):
        wasserstein2_exact_small(np.zeros(3), np.zeros(4))


@pytest.mark.parametrize("g1,g2", [((0.0, 1.0), (1.0, 2.0)), ((-2.0, 0.5), (3.0, 0.5)), ((1.0, 0.0), (0.0, 3.0))])
def test_w2_between_gaussians(g1, g2):
    expected = np.hypot(g1[0] - g2[0], g1[1] - g2[1])
    assert wasserstein2_1d(Gaussian(*g1), Gaussian(*g2)) == pytest.approx(expected, abs=1e-6)


def test_w2_point_mass_to_gaussian_is_exact():
    # W2^2(delta_a, N(m, s^2)) = (a - m)^2 + s^2
    assert wasserstein2_1d([1.5], Gaussian(-0.5, 2.0)) == pytest.approx(np.sqrt(8.0), abs=1e-13)
    assert wasserstein2_1d(Gaussian(-0.5, 2.0), [1.5]) == pytest.approx(np.sqrt(8.0), abs=1e-13)


def test_w2_sample_to_gaussian_converges_to_zero():
    g = Gaussian(0.0, 1.0)
    large = stats.norm.ppf((np.arange(100_000) + 0.5) / 100_000)
    assert wasserstein2_1d(large, g) < 2e-3


def test_quantile_reference_matches_direct_distance():
    rng = np.random.default_rng(3)
    ref = QuantileReference(rng.normal(size=997))
    samples = rng.normal(size=(5, 13))
    got = ref.distances(samples)
    for s, d in zip(samples, got):
        assert d == pytest.approx(wasserstein2_1d(s, ref.sample), abs=1e-12)
    assert wasserstein2_1d(samples[0], ref) == pytest.approx(got[0], abs=1e-15)


_floats = st.floats(-100, 100, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(_floats, min_size=1, max_size=12), st.lists(_floats, min_size=1, max_size=12),
       st.lists(_floats, min_size=1, max_size=12))
def test_w2_triangle_inequality(a, b, c):
    ab, bc, ac = wasserstein2_1d(a, b), wasserstein2_1d(b, c), wasserstein2_1d(a, c)
    assert ac <= ab + bc + 1e-9 * (1 + ab + bc)


@settings(max_examples=60, deadline=None)
@given(st.lists(_floats, min_size=1, max_size=12), st.lists(_floats, min_size=1, max_size=12),
       st.floats(-10, 10, allow_nan=False))
def test_w2_scaling_and_symmetry(a, b, c):
    d = wasserstein2_1d(a, b)
    assert wasserstein2_1d(b, a) == pytest.approx(d, rel=1e-12, abs=1e-12)
    scaled = wasserstein2_1d(c * np.asarray(a), c * np.asarray(b))
    assert scaled == pytest.approx(abs(c) * d, rel=1e-9, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(_floats, min_size=1, max_size=10), _floats)
def test_w2_translation(a, shift):
    assume(abs(shift) > 1e-6)
    assert wasserstein2_1d(a, np.asarray(a) + shift) == pytest.approx(abs(shift), rel=1e-9)


def test_gaussian_empirical_w2_squared_slope():
    rng = np.random.default_rng(1)
    Ns = [32, 64, 128, 256, 512, 1024, 2048, 4096]
    g = Gaussian(0.0, 1.0)
    values = [np.mean([wasserstein2_1d(rng.normal(size=N), g) ** 2 for _ in range(200)]) for N in Ns]
    assert -1.1 <= loglog_slope(Ns, values).slope <= -0.8


# ---------------------------------------------------------------- fits and tails

def test_loglog_slope_exact_power_law():
    Ns = np.array([8, 16, 32, 64, 128])
    fit = loglog_slope(Ns, 3.0 / Ns)
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0)
    assert np.exp(fit.intercept) == pytest.approx(3.0)
    np.testing.assert_allclose(fit.residuals(), 0.0, atol=1e-12)
    with pytest.raises(ValueError):
        loglog_slope([1, 2, 3], [1, 2, 3])
    with pytest.raises(ValueError):
        loglog_slope([1, 2, 3, 4], [1, 0, 3, 4])


def test_tail_with_no_exceedance():
    est = empirical_tail(np.zeros(1000), 0.5)
    assert est.estimate == 0.0 and est.low == 0.0
    # Wilson upper bound for zero successes is close to the rule of three
    assert 3 / 1000 < est.high < 4 / 1000
    with pytest.raises(EmptySample):
        empirical_tail([], 1.0)


@pytest.mark.parametrize("threshold", [0.5, 1.0, 2.0])
def test_gaussian_tail_matches_error_function(threshold):
    samples = np.random.default_rng(4).normal(size=20_000)
    est = empirical_tail(samples, threshold)
    exact = 0.5 * math.erfc(threshold / math.sqrt(2))
    assert abs(est.estimate - exact) <= 2 * (est.high - est.low)


def test_tail_separation():
    low = empirical_tail(np.r_[np.zeros(990), np.ones(10)], 0.5)
    high = empirical_tail(np.r_[np.zeros(700), np.ones(300)], 0.5)
    assert low.separated_below(high) and not high.separated_below(low)


def test_mean_ci():
    x = np.random.default_rng(0).normal(size=(400, 2))
    mean, half = mean_ci(x, axis=0)
    np.testing.assert_allclose(half, 1.959964 * x.std(axis=0, ddof=1) / 20, rtol=1e-6)
    assert mean.shape == (2,)
