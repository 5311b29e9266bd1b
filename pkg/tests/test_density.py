import math

import numpy as np
import pytest

from wrcp.density import (
    BandwidthGrid,
    BandwidthSelectionError,
    DegenerateWeightsError,
    FeatureScaler,
    default_bandwidth_grid,
    kde_density,
    kde_fit,
    kde_log_density,
    likelihood_ratio_weights,
    select_bandwidth,
)


def naive_density(samples, b, x):
    """Double-loop reference implementation."""
    samples = np.atleast_2d(samples)
    x = np.asarray(x, dtype=float)
    d = samples.shape[1]
    total = 0.0
    for row in samples:
        total += math.exp(-np.sum((x - row) ** 2) / (2 * b * b))
    return total / (samples.shape[0] * (math.sqrt(2 * math.pi) * b) ** d)


class TestKdeFit:
    def test_validation(self):
        with pytest.raises(ValueError):
            kde_fit(np.zeros((1, 2)), 1.0)
        with pytest.raises(ValueError):
            kde_fit(np.array([[0.0], [np.nan]]), 1.0)
        with pytest.raises(ValueError):
            kde_fit(np.zeros((3, 2)), 0.0)

    def test_two_point_hand_value(self):
        model = kde_fit(np.array([[-1.0], [1.0]]), 1.0)
        expected = (1 / math.sqrt(2 * math.pi)) * math.exp(-0.5)
        assert kde_density(model, np.array([0.0])) == pytest.approx(expected, rel=1e-12)

    def test_integrates_to_one_1d(self):
        rng = np.random.default_rng(4)
        samples = rng.normal(size=40)
        model = kde_fit(samples, 0.7)
        b = 0.7
        grid = np.linspace(samples.min() - 6 * b, samples.max() + 6 * b, 10_000)
        dens = kde_density(model, grid[:, None])
        integral = np.trapezoid(dens, grid)
        assert 0.99 <= integral <= 1.01


class TestKdeDensity:
    def test_gaussian_tail(self):
        model = kde_fit(np.array([[0.0], [0.1]]), 0.5)
        peak = kde_density(model, np.array([0.05]))
        far = kde_density(model, np.array([10.0]))
        assert far <= 1e-20 * peak

    def test_symmetry(self):
        model = kde_fit(np.array([[-2.0], [2.0]]), 0.8)
        assert kde_density(model, np.array([1.3])) == pytest.approx(
            kde_density(model, np.array([-1.3])), rel=1e-12)

    def test_matches_naive_double_loop(self):
        rng = np.random.default_rng(12)
        samples = rng.normal(size=(30, 3))
        model = kde_fit(samples, 0.6)
        for _ in range(5):
            x = rng.normal(size=3)
            assert kde_density(model, x) == pytest.approx(
                naive_density(samples, 0.6, x), rel=1e-10)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        samples = rng.normal(size=(25, 2))
        shuffled = samples[rng.permutation(25)]
        x = np.array([0.3, -0.4])
        assert kde_density(kde_fit(samples, 0.5), x) == pytest.approx(
            kde_density(kde_fit(shuffled, 0.5), x), rel=1e-12)

    def test_dim_mismatch(self):
        model = kde_fit(np.zeros((3, 2)) + np.arange(3)[:, None], 1.0)
        with pytest.raises(ValueError):
            kde_density(model, np.zeros(3))


class TestBandwidthSelection:
    def test_grid_validation(self):
        with pytest.raises(ValueError):
            BandwidthGrid([0.2, 0.1])
        with pytest.raises(ValueError):
            BandwidthGrid([-1.0, 1.0])
        assert default_bandwidth_grid().candidates.size == 20

    def test_single_candidate(self):
        rng = np.random.default_rng(0)
        b = select_bandwidth(rng.normal(size=50), BandwidthGrid([0.33]))
        assert b == 0.33

    def test_standard_normal_midgrid(self):
        rng = np.random.default_rng(7)
        samples = rng.normal(size=1000)
        grid = default_bandwidth_grid()
        b = select_bandwidth(samples, grid, seed=1)
        lo = grid.candidates[len(grid.candidates) // 3]
        hi = grid.candidates[2 * len(grid.candidates) // 3]
        assert lo <= b <= hi

    def test_duplicate_heavy_prefers_larger(self):
        # the clump's isolated satellites punish narrow kernels in every fold
        rng = np.random.default_rng(5)
        spread = rng.normal(size=50)
        clumped = np.concatenate([np.zeros(45), [-40.0, -20.0, 20.0, 40.0, 60.0]])
        grid = default_bandwidth_grid()
        assert select_bandwidth(clumped, grid, seed=2) > select_bandwidth(spread, grid, seed=2)

    def test_requires_enough_samples(self):
        with pytest.raises(ValueError):
            select_bandwidth(np.arange(5.0))

    def test_deterministic_in_seed(self):
        rng = np.random.default_rng(10)
        samples = rng.normal(size=80)
        assert select_bandwidth(samples, seed=3) == select_bandwidth(samples, seed=3)


class TestLikelihoodRatioWeights:
    def test_identical_kdes_give_uniform(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(40, 2))
        model = kde_fit(x, 0.5)
        w = likelihood_ratio_weights(x, model, model)
        assert np.allclose(w, 1.0 / 40, atol=1e-12)
        assert w.sum() == pytest.approx(1.0, abs=1e-9)

    def test_target_shift_reweights(self):
        rng = np.random.default_rng(2)
        cal = rng.uniform(-1, 1, size=(200, 1))
        target = rng.uniform(0.5, 1.0, size=(200, 1))
        w = likelihood_ratio_weights(cal, kde_fit(target, 0.15), kde_fit(cal, 0.15))
        right = cal.ravel() > 0.5
        assert w[right].min() > 1.0 / 200
        assert w[~right].mean() < w[right].mean()

    def test_far_outlier_gets_negligible_weight(self):
        cal = np.concatenate([np.linspace(0, 1, 50), [25.0]])[:, None]
        target = np.linspace(0, 1, 80)[:, None]
        w = likelihood_ratio_weights(cal, kde_fit(target, 0.2), kde_fit(cal, 0.2))
        assert w[-1] <= 1e-6 * w.max()

    def test_degenerate_raises(self):
        cal = np.zeros((5, 1)) + np.arange(5)[:, None]
        target = kde_fit(np.array([[1e6], [1e6 + 1]]), 0.01)
        with pytest.raises(DegenerateWeightsError):
            likelihood_ratio_weights(cal, target, kde_fit(cal, 0.5))


class TestFeatureScaler:
    def test_round_trip_statistics(self):
        rng = np.random.default_rng(8)
        x = rng.normal(loc=[3.0, -1.0], scale=[2.0, 0.5], size=(500, 2))
        scaler = FeatureScaler.fit(x)
        z = scaler.transform(x)
        assert np.allclose(z.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(z.std(axis=0), 1.0, atol=1e-12)

    def test_constant_dim_guard(self):
        x = np.column_stack([np.ones(20), np.arange(20.0)])
        z = FeatureScaler.fit(x).transform(x)
        assert np.all(np.isfinite(z))
