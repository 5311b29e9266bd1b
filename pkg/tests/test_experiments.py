import numpy as np
import pytest

from wrcp.datagen import default_task, gen_synthetic
from wrcp.experiments import (
    DEFAULT_ALPHAS,
    correlation_study,
    evaluate_bundle,
    fit_weighting,
    pareto_sweep,
    summarize_rows,
)
from wrcp.training import TrainConfig, train


@pytest.fixture(scope="module")
def bundle():
    task = default_task(seed=3)
    return gen_synthetic(task, n_per_source=150, n_cal=150, n_test_sets=6,
                         m_per_test=120)


@pytest.fixture(scope="module")
def erm_model(bundle):
    model, _ = train(bundle, TrainConfig(beta=0.0, epochs=60, seed=0,
                                         variant="erm"))
    return model


class TestEvaluateBundle:
    def test_row_grid_complete_and_sorted(self, bundle, erm_model):
        methods = ["cp", "wccp"]
        rows = evaluate_bundle(bundle, {m: erm_model for m in methods},
                               methods, alphas=(0.1, 0.5), trial=2)
        assert len(rows) == len(bundle.tests) * 2 * 2
        keys = [(r.trial, r.test_set, r.method, r.alpha) for r in rows]
        assert keys == sorted(keys)
        assert all(r.trial == 2 for r in rows)

    def test_gap_consistency(self, bundle, erm_model):
        rows = evaluate_bundle(bundle, {"cp": erm_model}, ["cp"],
                               alphas=(0.2,))
        for r in rows:
            assert r.gap == pytest.approx(abs(r.coverage - 0.8), abs=1e-12)
            assert r.avg_size == pytest.approx(2 * r.tau)

    def test_summary_matches_row_means(self, bundle, erm_model):
        rows = evaluate_bundle(bundle, {"cp": erm_model, "wccp": erm_model},
                               ["cp", "wccp"], alphas=DEFAULT_ALPHAS)
        for method, mean_gap, mean_size in summarize_rows(rows):
            mine = [r for r in rows if r.method == method]
            assert mean_gap == pytest.approx(np.mean([r.gap for r in mine]),
                                             abs=1e-9)
            assert mean_size == pytest.approx(
                np.mean([r.avg_size for r in mine]), abs=1e-9)

    def test_wccp_dominates_weighted_thresholds(self, bundle, erm_model):
        methods = ["iwcp", "wccp"]
        rows = evaluate_bundle(bundle, {m: erm_model for m in methods},
                               methods, alphas=(0.1, 0.3), seed=0)
        by_key = {}
        for r in rows:
            by_key.setdefault((r.test_set, r.alpha), {})[r.method] = r.tau
        for taus in by_key.values():
            assert taus["wccp"] >= taus["iwcp"] - 1e-12

    def test_oracle_mode_needs_synthetic(self, bundle, erm_model):
        stripped = type(bundle)(sources=bundle.sources,
                                calibration=bundle.calibration,
                                tests=bundle.tests, task=None)
        with pytest.raises(ValueError, match="oracle"):
            evaluate_bundle(stripped, {"iwcp": erm_model}, ["iwcp"],
                            weight_mode="oracle")

    def test_unknown_method_rejected(self, bundle, erm_model):
        with pytest.raises(ValueError):
            evaluate_bundle(bundle, {"cqr": erm_model}, ["cqr"])

    def test_weights_sum_to_one(self, bundle):
        ctx = fit_weighting(bundle, seed=0)
        for w in ctx.source_weights:
            assert w.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(w >= 0)


class TestCorrelationStudy:
    def test_requires_three_test_sets(self, bundle, erm_model):
        small = type(bundle)(sources=bundle.sources,
                             calibration=bundle.calibration,
                             tests=bundle.tests[:2], task=bundle.task)
        with pytest.raises(ValueError):
            correlation_study(small, erm_model)

    def test_rank_invariance_under_score_doubling(self, bundle, erm_model):
        rows, coeffs = correlation_study(bundle, erm_model)
        # doubling all targets and predictions rescales scores; the
        # normalization by the calibration mean makes distances invariant,
        # so Spearman values are reproducible from the rows alone
        from wrcp.distributions import spearman
        gaps = [r["avg_gap"] for r in rows]
        for measure in ("w", "de"):
            assert coeffs[measure] == pytest.approx(
                spearman([r[measure] for r in rows], gaps))


class TestParetoSweep:
    def test_single_beta_zero(self, bundle):
        out = pareto_sweep(bundle, [0.0], epochs=30, seed=1, alphas=(0.2,))
        assert len(out) == 1 and out[0]["beta"] == 0.0

    def test_rejects_empty(self, bundle):
        with pytest.raises(ValueError):
            pareto_sweep(bundle, [])
