"""Desk-scale experiment harness: method evaluation, correlation study,
regularization sweep, and bound-validity reports.

Five inference rules share one evaluation path; each consumes a trained
model, the bundle's calibration scores, and (for the weighted rules)
likelihood-ratio weights per test set.  Rows come back sorted by
(trial, test_set, method, alpha) so output files never depend on
evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conformal import (
    alpha_d,
    coverage_gap,
    estimate_density_bound,
    gap_bound_wasserstein,
    split_cp_threshold,
    weighted_threshold,
    worst_case_threshold,
)
from .datagen import DatasetBundle, oracle_mixture_weights
from .density import (
    BandwidthGrid,
    FeatureScaler,
    KdeModel,
    kde_fit,
    likelihood_ratio_weights,
    select_bandwidth,
)
from .distributions import (
    EmpiricalDist,
    HistogramPair,
    UndefinedCorrelationError,
    expectation_difference,
    kl_divergence,
    mixture,
    spearman,
    tv_distance,
    wasserstein1,
)
from .mlp import MlpModel, mlp_forward
from .training import TrainConfig, compute_source_weights, train

__all__ = [
    "DEFAULT_ALPHAS",
    "METHODS",
    "EvalRow",
    "WeightingContext",
    "fit_weighting",
    "test_set_weights",
    "evaluate_bundle",
    "summarize_rows",
    "correlation_study",
    "pareto_sweep",
    "bound_sweep",
    "alpha_d_sweep",
]

DEFAULT_ALPHAS = tuple(round(0.1 * i, 1) for i in range(1, 10))
METHODS = ("cp", "iwcp", "wccp", "wrcp", "wrcp_uw")
_WEIGHTED_METHODS = ("iwcp", "wrcp")


@dataclass(frozen=True)
class EvalRow:
    trial: int
    test_set: int
    method: str
    alpha: float
    coverage: float
    gap: float
    avg_size: float
    tau: float


@dataclass(eq=False)
class WeightingContext:
    """Standardizer, calibration KDE, and per-source weights, fit once."""

    scaler: FeatureScaler
    cal_kde: KdeModel
    source_weights: list[np.ndarray]
    seed: int
    grid: BandwidthGrid | None = None


def fit_weighting(bundle: DatasetBundle, seed: int = 0,
                  grid: BandwidthGrid | None = None) -> WeightingContext:
    scaler = FeatureScaler.fit(bundle.calibration[0])
    cal_z = scaler.transform(bundle.calibration[0])
    cal_kde = kde_fit(cal_z, select_bandwidth(cal_z, grid, seed=seed))
    return WeightingContext(
        scaler=scaler, cal_kde=cal_kde,
        source_weights=compute_source_weights(bundle, seed=seed, grid=grid),
        seed=seed, grid=grid)


def test_set_weights(ctx: WeightingContext, bundle: DatasetBundle,
                     test_x: np.ndarray) -> np.ndarray:
    """Likelihood-ratio weights for one test set's feature sample.

    The test KDE reuses the calibration bandwidth: mixture test sets share
    the calibration sample's scale in standardized space, and per-test-set
    cross-validation would dominate the evaluation budget.
    """
    test_z = ctx.scaler.transform(test_x)
    test_kde = kde_fit(test_z, ctx.cal_kde.bandwidth)
    cal_z = ctx.scaler.transform(bundle.calibration[0])
    return likelihood_ratio_weights(cal_z, test_kde, ctx.cal_kde)


def _scores(model: MlpModel, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.abs(mlp_forward(model, x) - y)


def evaluate_bundle(bundle: DatasetBundle, models: dict[str, MlpModel],
                    methods, alphas=DEFAULT_ALPHAS, trial: int = 0,
                    seed: int = 0, weight_mode: str = "kde",
                    conservative: bool = False,
                    ctx: WeightingContext | None = None) -> list[EvalRow]:
    """Per-(test set, method, alpha) coverage, gap, set size, and threshold.

    ``models`` maps each requested method to the checkpoint it should use;
    ``weight_mode`` "oracle" swaps KDE ratios for the synthetic task's exact
    density ratios (synthetic bundles only).
    """
    methods = list(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
        if m not in models:
            raise ValueError(f"method {m!r} has no model checkpoint attached")
    if weight_mode not in ("kde", "oracle"):
        raise ValueError("weight_mode must be 'kde' or 'oracle'")
    needs_weights = [m for m in methods if m in _WEIGHTED_METHODS]
    if needs_weights and weight_mode == "oracle" and bundle.task is None:
        raise ValueError("oracle weights need a synthetic bundle with a task")
    if needs_weights and weight_mode == "kde" and ctx is None:
        ctx = fit_weighting(bundle, seed=seed)

    cal_x, cal_y = bundle.calibration
    per_model_cache: dict[int, dict] = {}

    def model_data(model: MlpModel) -> dict:
        key = id(model)
        if key not in per_model_cache:
            cal_scores = _scores(model, cal_x, cal_y)
            per_model_cache[key] = {
                "cal_scores": cal_scores,
                "cal_dist": EmpiricalDist(cal_scores),
                "source_dists": [EmpiricalDist(_scores(model, xs, ys))
                                 for xs, ys in bundle.sources],
            }
        return per_model_cache[key]

    rows: list[EvalRow] = []
    for j, (mix_w, test_x, test_y) in enumerate(bundle.tests):
        weights_j = None
        if needs_weights:
            if weight_mode == "oracle":
                weights_j = oracle_mixture_weights(bundle.task, mix_w, cal_x)
            else:
                weights_j = test_set_weights(ctx, bundle, test_x)
        for method in methods:
            data = model_data(models[method])
            test_scores = _scores(models[method], test_x, test_y)
            for alpha in alphas:
                if method == "cp":
                    tau = split_cp_threshold(data["cal_dist"], alpha)
                elif method == "wrcp_uw":
                    tau = weighted_threshold(data["cal_dist"], alpha,
                                             conservative=conservative)
                elif method == "wccp":
                    tau = worst_case_threshold(data["source_dists"], alpha)
                else:  # iwcp / wrcp
                    dist = EmpiricalDist(data["cal_scores"], weights_j)
                    tau = weighted_threshold(dist, alpha,
                                             conservative=conservative)
                cov = float(np.mean(test_scores <= tau))
                rows.append(EvalRow(
                    trial=trial, test_set=j, method=method, alpha=alpha,
                    coverage=cov, gap=coverage_gap(cov, alpha),
                    avg_size=2.0 * tau, tau=tau))
    rows.sort(key=lambda r: (r.trial, r.test_set, r.method, r.alpha))
    return rows


def summarize_rows(rows) -> list[tuple[str, float, float]]:
    """Per-method mean gap and mean size, in method name order."""
    by_method: dict[str, list[EvalRow]] = {}
    for r in rows:
        by_method.setdefault(r.method, []).append(r)
    out = []
    for method in sorted(by_method):
        rs = by_method[method]
        out.append((method,
                    float(np.mean([r.gap for r in rs])),
                    float(np.mean([r.avg_size for r in rs]))))
    return out


# ---------------------------------------------------------------------------
# Correlation study


def correlation_study(bundle: DatasetBundle, model: MlpModel,
                      alphas=DEFAULT_ALPHAS) -> tuple[list[dict], dict]:
    """Distances between calibration and test score distributions versus the
    average vanilla-CP coverage gap over the alpha sweep.

    Scores are normalized by the calibration score mean before distance
    computation.  Returns per-test-set rows and the Spearman coefficient per
    measure (None when undefined).
    """
    if len(bundle.tests) < 3:
        raise ValueError("correlation study needs at least 3 test sets")
    cal_x, cal_y = bundle.calibration
    cal_scores = _scores(model, cal_x, cal_y)
    cal_dist = EmpiricalDist(cal_scores)
    taus = {alpha: split_cp_threshold(cal_dist, alpha) for alpha in alphas}
    mu = cal_scores.mean()
    if mu <= 0:
        raise ValueError("degenerate calibration scores (zero mean)")
    cal_norm = EmpiricalDist(cal_scores / mu)

    rows = []
    for j, (_, test_x, test_y) in enumerate(bundle.tests):
        test_scores = _scores(model, test_x, test_y)
        gaps = [coverage_gap(float(np.mean(test_scores <= taus[a])), a)
                for a in alphas]
        test_norm = EmpiricalDist(test_scores / mu)
        hist = HistogramPair.from_samples(cal_scores / mu, test_scores / mu)
        rows.append({
            "test_set": j,
            "avg_gap": float(np.mean(gaps)),
            "w": wasserstein1(cal_norm, test_norm),
            "tv": tv_distance(hist),
            "kl": kl_divergence(hist),
            "de": expectation_difference(cal_norm, test_norm),
        })
    gaps = [r["avg_gap"] for r in rows]
    coefficients = {}
    for measure in ("w", "tv", "kl", "de"):
        try:
            coefficients[measure] = spearman([r[measure] for r in rows], gaps)
        except UndefinedCorrelationError:
            coefficients[measure] = None
    return rows, coefficients


# ---------------------------------------------------------------------------
# Regularization sweep


def pareto_sweep(bundle: DatasetBundle, betas, epochs: int = 200,
                 learning_rate: float = 1e-3, seed: int = 0,
                 alphas=DEFAULT_ALPHAS) -> list[dict]:
    """Train one model per beta (shared seed), evaluate the weighted rule,
    and report (beta, mean gap, mean size); beta 0 is the plain
    importance-weighted baseline."""
    betas = list(betas)
    if not betas:
        raise ValueError("need at least one beta")
    ctx = fit_weighting(bundle, seed=seed)
    out = []
    for beta in betas:
        cfg = TrainConfig(beta=float(beta), epochs=epochs,
                          learning_rate=learning_rate, seed=seed,
                          variant="wrcp")
        model, _ = train(bundle, cfg, source_weights=ctx.source_weights)
        rows = evaluate_bundle(bundle, {"wrcp": model}, ["wrcp"],
                               alphas=alphas, seed=seed, ctx=ctx)
        out.append({
            "beta": float(beta),
            "mean_gap": float(np.mean([r.gap for r in rows])),
            "mean_size": float(np.mean([r.avg_size for r in rows])),
        })
    return out


# ---------------------------------------------------------------------------
# Bound reports


def bound_sweep(bundle: DatasetBundle, model: MlpModel,
                alphas=DEFAULT_ALPHAS, seed: int = 0) -> list[dict]:
    """Per (test set, alpha): observed vanilla-CP gap against the
    score-space bound sqrt(2·L·W) with L estimated from calibration scores."""
    cal_x, cal_y = bundle.calibration
    cal_scores = _scores(model, cal_x, cal_y)
    cal_dist = EmpiricalDist(cal_scores)
    density_bound = estimate_density_bound(cal_scores, seed=seed)
    taus = {alpha: split_cp_threshold(cal_dist, alpha) for alpha in alphas}
    rows = []
    for j, (_, test_x, test_y) in enumerate(bundle.tests):
        test_scores = _scores(model, test_x, test_y)
        w_hat = wasserstein1(cal_dist, EmpiricalDist(test_scores))
        bound = gap_bound_wasserstein(density_bound, w_hat)
        for alpha in alphas:
            cov = float(np.mean(test_scores <= taus[alpha]))
            gap = coverage_gap(cov, alpha)
            rows.append({"test_set": j, "alpha": alpha, "gap": gap,
                         "w_hat": w_hat, "bound": bound,
                         "holds": gap <= bound})
    return rows


def alpha_d_sweep(bundle: DatasetBundle, model: MlpModel, alphas=(0.1,),
                  seed: int = 0, ctx: WeightingContext | None = None,
                  ) -> list[dict]:
    """Mixture coverage gap against the adaptive slack alpha_D.

    Per test set the threshold is the weighted quantile of the mixture of
    per-source weighted calibration distributions under the stored mixture
    weights; alpha_D is the worst per-source CDF gap at that threshold.
    """
    if bundle.task is None:
        raise ValueError("alpha_D sweep needs a synthetic bundle")
    if ctx is None:
        ctx = fit_weighting(bundle, seed=seed)
    cal_x, cal_y = bundle.calibration
    cal_scores = _scores(model, cal_x, cal_y)
    weighted_cals = [EmpiricalDist(cal_scores, w) for w in ctx.source_weights]
    source_dists = [EmpiricalDist(_scores(model, xs, ys))
                    for xs, ys in bundle.sources]
    rows = []
    for j, (mix_w, test_x, test_y) in enumerate(bundle.tests):
        mix_dist = mixture(weighted_cals, mix_w)
        test_scores = _scores(model, test_x, test_y)
        for alpha in alphas:
            tau = weighted_threshold(mix_dist, alpha)
            a_d = alpha_d(weighted_cals, source_dists, tau)
            cov = float(np.mean(test_scores <= tau))
            gap = coverage_gap(cov, alpha)
            rows.append({"test_set": j, "alpha": alpha, "gap": gap,
                         "alpha_d": a_d, "tau": tau})
    return rows
