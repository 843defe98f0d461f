import math
import warnings

import numpy as np
import pytest

from betagas.equilibrium import semicircle_measure
from betagas.model import GridMeasure, InteractionPotential
from betagas.samplers import tridiagonal_samples
from betagas.statistics import (
    BumpProduct,
    SmoothBump,
    TestFunction,
    UnfoldingWarning,
    WeightDegeneracyWarning,
    averaged_correlation,
    batch_means,
    bulk_gaps,
    concentration_check,
    empirical_density,
    estimate_dirichlet,
    exp_moment_diagnostic,
    sine_kernel_pair_reference,
    spacing_histogram,
    spacing_ks,
    unfold,
    window_half_width,
)

# int psi over (-1, 1) with psi(t) = exp(-1 / (1 - t^2)); trapezoid rule on 4e6 points
PSI_INTEGRAL = 0.44399381616807937
# int g(r) (1 - sinc(r)^2) dr for g = psi(r / 2); trapezoid rule on 4e6 points
SINE_PAIR_HALF_WIDTH_2 = 0.559911459641281

SEMICIRCLE = semicircle_measure(math.sqrt(2), -2.0, 2.0, 800)
UNIT = GridMeasure.uniform(-1.0, 1.0, 200)
H = InteractionPotential.gaussian(0.1, 1.0)


@pytest.fixture(scope="module")
def gue200():
    return tridiagonal_samples(200, 2.0, 500, 101)


def iid_uniform(M, N, seed):
    return np.random.default_rng(seed).uniform(-1.0, 1.0, (M, N))


class TestBatchMeans:
    def test_iid_standard_error(self):
        v = np.random.default_rng(0).standard_normal(100_000)
        mean, se = batch_means(v)
        assert se == pytest.approx(1 / math.sqrt(len(v)), rel=0.5)
        assert abs(mean) <= 4 * se

    def test_errors(self):
        with pytest.raises(ValueError):
            batch_means(np.ones(100), n_batches=5)
        with pytest.raises(ValueError):
            batch_means(np.ones(10))


class TestEmpiricalDensity:
    def test_degenerate_input(self):
        X = np.tile([-0.5, 0.0, 0.5], (100, 1))
        mu = empirical_density(X, (-1.5, 1.5, 300))
        for c in (-0.5, 0.0, 0.5):
            near = np.abs(mu.midpoints - c) < 0.25
            assert mu.weights[near].sum() == pytest.approx(1 / 3, abs=0.01)

    def test_matches_semicircle(self, gue200):
        mu = empirical_density(gue200, (-2.0, 2.0, 800))
        assert mu.l1_distance(SEMICIRCLE) <= 0.05

    def test_empty_input(self):
        with pytest.raises(ValueError):
            empirical_density(np.empty((0, 3)), (-1, 1, 10))

    def test_explicit_bandwidth(self):
        with pytest.raises(ValueError):
            empirical_density(np.zeros((2, 2)) + [0.0, 0.1], (-1, 1, 10), bandwidth=0.0)


class TestUnfolding:
    def test_uniform_measure_is_linear(self):
        mu = GridMeasure.uniform(0.0, 1.0, 100)
        x = np.sort(np.random.default_rng(1).random(40))
        np.testing.assert_allclose(unfold(x, mu).unfolded_points, 40 * x, atol=1e-12)

    def test_monotone(self, gue200):
        y = unfold(gue200[0], SEMICIRCLE).unfolded_points
        assert np.all(np.diff(y) >= 0)

    def test_mean_gap(self, gue200):
        assert 0.95 <= bulk_gaps(gue200, SEMICIRCLE).mean() <= 1.05

    def test_bulk_gaps_match_unfold(self, gue200):
        pooled = np.concatenate([unfold(row, SEMICIRCLE).gaps for row in gue200[:5]])
        np.testing.assert_allclose(bulk_gaps(gue200[:5], SEMICIRCLE), pooled, rtol=1e-13)

    def test_far_outside_warns(self):
        with pytest.warns(UnfoldingWarning):
            unfold(np.linspace(5, 6, 10), SEMICIRCLE)


class TestSpacings:
    def test_poisson_gaps(self):
        X = np.random.default_rng(2).uniform(0.0, 1.0, (20, 1000))
        gaps = bulk_gaps(X, GridMeasure.uniform(0.0, 1.0, 100))
        assert len(gaps) >= 10_000
        assert spacing_ks(gaps, cdf=lambda s: 1 - np.exp(-s)) <= 0.03

    def test_small_gaps_depleted(self, gue200):
        hist = spacing_histogram(bulk_gaps(gue200, SEMICIRCLE), bins=40, range_=(0.0, 4.0))
        assert hist.mass[0] < 1 - math.exp(-0.1)

    def test_mass_sums_to_one(self):
        gaps = np.random.default_rng(3).exponential(size=5000)
        hist = spacing_histogram(gaps)
        assert hist.mass.sum() == pytest.approx(1.0, abs=1e-12)
        assert hist.cdf(np.inf) == 1.0

    def test_few_gaps_warn(self):
        with pytest.warns(UserWarning):
            spacing_histogram(np.ones(10))

    def test_two_sample(self):
        rng = np.random.default_rng(4)
        assert spacing_ks(rng.exponential(size=4000), rng.exponential(size=4000)) < 0.04


class TestBumps:
    def test_integral(self):
        assert SmoothBump(1.0).integral == pytest.approx(PSI_INTEGRAL, rel=1e-10)
        assert SmoothBump(2.0).integral == pytest.approx(2 * PSI_INTEGRAL, rel=1e-10)
        assert SmoothBump(0.5, normalized=True).integral == 1.0

    def test_cdf(self):
        b = SmoothBump(0.7)
        assert b.cdf(-1.0) == 0.0 and b.cdf(1.0) == 1.0
        assert b.cdf(0.0) == pytest.approx(0.5, abs=1e-12)

    def test_product_round_trip(self):
        f = BumpProduct(1.0, (2.0, 1.5), (1.0, 0.5))
        assert f.k == 3
        g = BumpProduct.from_dict(f.to_dict())
        assert g.to_dict() == f.to_dict()
        assert f.integral() == pytest.approx(2 * PSI_INTEGRAL * 0.5 * 1.5 * PSI_INTEGRAL, rel=1e-10)

    def test_sine_reference(self):
        assert sine_kernel_pair_reference(SmoothBump(2.0)) == pytest.approx(SINE_PAIR_HALF_WIDTH_2, rel=1e-9)


class TestAveragedCorrelation:
    def test_window(self):
        assert window_half_width(400, 0.5) == pytest.approx(0.05)

    def test_one_point_normalization(self, gue200):
        est = averaged_correlation(gue200, 1, 0.0, mu=SEMICIRCLE)
        assert abs(est.value - 1.0) <= 3 * est.std_error

    def test_iid_pair_is_flat(self):
        est = averaged_correlation(iid_uniform(4000, 400, 5), 2, 0.0, mu=UNIT)
        assert abs(est.value - 2 * PSI_INTEGRAL) <= 3 * est.std_error

    def test_iid_triple_is_flat(self):
        est = averaged_correlation(iid_uniform(4000, 400, 6), 3, 0.0, mu=UNIT)
        assert abs(est.value - (2 * PSI_INTEGRAL) ** 2) <= 3 * est.std_error

    def test_sine_kernel(self):
        X = tridiagonal_samples(400, 2.0, 3000, 7)
        mu = semicircle_measure(math.sqrt(2), -2.0, 2.0, 800)
        est = averaged_correlation(X, 2, 0.0, mu=mu)
        assert abs(est.value - SINE_PAIR_HALF_WIDTH_2) <= 3 * est.std_error

    def test_doubling_samples(self):
        X = iid_uniform(8000, 200, 8)
        half = averaged_correlation(X[:4000], 2, 0.0, mu=UNIT, n_batches=200)
        full = averaged_correlation(X, 2, 0.0, mu=UNIT, n_batches=200)
        assert full.std_error / half.std_error == pytest.approx(1 / math.sqrt(2), rel=0.2)

    def test_permutation_invariance(self):
        X = iid_uniform(200, 100, 9)
        P = np.array([np.random.default_rng(i).permutation(row) for i, row in enumerate(X)])
        for k in (1, 2, 3):
            assert averaged_correlation(X, k, 0.0, mu=UNIT).value == averaged_correlation(P, k, 0.0, mu=UNIT).value

    def test_errors(self):
        X = iid_uniform(40, 16, 10)
        with pytest.raises(ValueError, match="bulk"):
            averaged_correlation(X, 2, 1.5, mu=UNIT)
        with pytest.raises(ValueError, match="support"):
            averaged_correlation(X, 2, 0.9, xi=0.5, mu=UNIT)
        with pytest.raises(ValueError):
            averaged_correlation(X, 4, 0.0, mu=UNIT)
        with pytest.raises(ValueError):
            averaged_correlation(X, 2, 0.0, f=BumpProduct(1.0), mu=UNIT)


class TestDirichletAndMoments:
    X = tridiagonal_samples(25, 2.0, 60, 11)
    mu = semicircle_measure(math.sqrt(2), -2.0, 2.0, 400)

    def test_zero_interaction(self):
        assert estimate_dirichlet(self.X, InteractionPotential.zero(), self.mu).value == 0.0
        assert exp_moment_diagnostic(self.X, InteractionPotential.zero(), self.mu) == (1.0, 1.0, 1.0)
        assert exp_moment_diagnostic(self.X, H, self.mu, lam=0.0) == (1.0, 1.0, 1.0)

    def test_finite_difference_gradient(self):
        exact = estimate_dirichlet(self.X, H, self.mu).value
        fd = estimate_dirichlet(self.X, H, self.mu, gradient="fd").value
        assert exact > 0
        assert abs(fd - exact) <= 1e-4 * exact

    def test_exp_moment_interval(self):
        lo, est, hi = exp_moment_diagnostic(self.X, H, self.mu)
        assert 0 < lo <= est <= hi
        # U <= 0 for positive semi-definite h, so every weight is at most one
        assert est <= 1.0

    def test_degenerate_weights_warn(self):
        with pytest.warns(WeightDegeneracyWarning):
            estimate_dirichlet(self.X[:20], H, self.mu, ess_min=1000)


class TestConcentration:
    def test_constant_has_zero_variance(self):
        X = tridiagonal_samples(20, 2.0, 40, 12)
        rows = concentration_check(TestFunction("constant", value=3.0), {20: X}, {20: SEMICIRCLE})
        assert rows[0]["variance"] <= 1e-20
        assert rows[0]["N"] == 20 and rows[0]["n_samples"] == 40

    def test_rows_sorted(self):
        sets = {N: tridiagonal_samples(N, 2.0, 40, N) for N in (30, 10)}
        rows = concentration_check(TestFunction("cos"), sets, {N: SEMICIRCLE for N in sets})
        assert [r["N"] for r in rows] == [10, 30]

    def test_cutoff_linear(self):
        f = TestFunction("linear", width=1.0)
        t = np.array([-3.0, -0.5, 0.0, 0.5, 3.0])
        np.testing.assert_allclose(f(t), [0.0, -0.5, 0.0, 0.5, 0.0])

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            TestFunction("tan")


def test_no_warnings_on_clean_input():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        averaged_correlation(iid_uniform(40, 100, 13), 1, 0.0, mu=UNIT)
