"""Conformal scores, prediction-set thresholds, coverage metrics, and the
coverage-gap bound calculators.

Scores are absolute residuals |h(x) - y|, so prediction sets are symmetric
intervals around the point prediction.  Three threshold rules are provided:
the finite-sample split rule, the weighted quantile used by importance
weighting, and the max-over-sources worst-case rule.  A threshold of +inf is
a real value here: it signals that the finite-sample rule exceeded the
largest calibration score, and it propagates through interval sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import EmpiricalDist, quantile
from .density import kde_density, kde_fit, select_bandwidth
from .mlp import MlpModel, mlp_forward

__all__ = [
    "CalibrationResult",
    "PredictionInterval",
    "BoundInputs",
    "conformal_scores",
    "score_values",
    "split_cp_threshold",
    "weighted_threshold",
    "worst_case_threshold",
    "prediction_set",
    "coverage",
    "avg_set_size",
    "coverage_gap",
    "gap_bound_wasserstein",
    "gap_bound_shift",
    "empirical_gap_bound",
    "estimate_kappa",
    "estimate_eta",
    "alpha_d",
    "estimate_density_bound",
]


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    """Scores, the confidence level, and the threshold produced from them."""

    scores: EmpiricalDist
    alpha: float
    tau: float
    method: str  # vanilla | importance_weighted | worst_case

    def __post_init__(self):
        if math.isfinite(self.tau):
            gaps = np.abs(self.scores.values - self.tau)
            if gaps.min() > 1e-9:
                raise ValueError("tau must be attainable as a support point")


@dataclass(frozen=True)
class PredictionInterval:
    """Symmetric interval [center - tau, center + tau]."""

    center: float
    tau: float

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")

    @property
    def size(self) -> float:
        return 2.0 * self.tau

    def covers(self, y: float) -> bool:
        return abs(self.center - y) <= self.tau


def conformal_scores(model: MlpModel, data) -> EmpiricalDist:
    """Uniform-weight distribution of |h(x_i) - y_i| over n x (d+1) rows."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != model.input_dim + 1:
        raise ValueError(
            f"expected n x {model.input_dim + 1} rows (features then target)")
    return EmpiricalDist(score_values(model, arr[:, :-1], arr[:, -1]))


def score_values(model: MlpModel, features, targets) -> np.ndarray:
    """Raw conformal scores |h(x) - y| as an array (fast path for harnesses)."""
    return np.abs(mlp_forward(model, features) - np.asarray(targets, dtype=np.float64).ravel())


def split_cp_threshold(scores: EmpiricalDist, alpha: float) -> float:
    """The ⌈(1-α)(n+1)⌉-th smallest score; +inf when the rank exceeds n."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if not scores.is_uniform():
        raise ValueError("split rule requires uniform score weights")
    n = len(scores)
    rank = math.ceil((1.0 - alpha) * (n + 1) - 1e-9)
    if rank > n:
        return math.inf
    return float(scores.sorted_values[rank - 1])


def weighted_threshold(scores: EmpiricalDist, alpha: float,
                       conservative: bool = False) -> float:
    """Level-(1-α) quantile of the weighted score distribution.

    With ``conservative=True`` the calibration weights are scaled by
    n/(n+1) and the remaining 1/(n+1) mass sits at +inf, which reduces to
    the finite-sample split rule under uniform weights.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    level = 1.0 - alpha
    if conservative:
        n = len(scores)
        level = level * (n + 1) / n
        if level > 1.0:
            return math.inf
    return quantile(scores, level)


def worst_case_threshold(per_source_scores, alpha: float) -> float:
    """Max of the per-source split thresholds; covers any source mixture."""
    if not per_source_scores:
        raise ValueError("need at least one source score distribution")
    return max(split_cp_threshold(s, alpha) for s in per_source_scores)


def prediction_set(center: float, tau: float) -> PredictionInterval:
    return PredictionInterval(center=float(center), tau=float(tau))


def coverage(intervals, targets) -> float:
    """Fraction of targets inside their intervals (boundary inclusive)."""
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if len(intervals) != targets.size:
        raise ValueError("one target per interval required")
    hits = sum(iv.covers(y) for iv, y in zip(intervals, targets))
    return hits / targets.size


def avg_set_size(intervals) -> float:
    """Mean interval size; an infinite threshold propagates to +inf."""
    if not intervals:
        raise ValueError("no intervals")
    return float(np.mean([iv.size for iv in intervals]))


def coverage_gap(empirical_coverage: float, alpha: float) -> float:
    """|coverage - (1-α)|, the footnote approximation of the CDF-gap form."""
    if not (0.0 <= empirical_coverage <= 1.0 and 0.0 < alpha < 1.0):
        raise ValueError("coverage in [0,1] and alpha in (0,1) required")
    return abs(empirical_coverage - (1.0 - alpha))


# ---------------------------------------------------------------------------
# Bound calculators


def gap_bound_wasserstein(density_bound: float, w_dist: float) -> float:
    """sqrt(2 L W): coverage-gap bound from the score-space distance."""
    if density_bound <= 0 or w_dist < 0:
        raise ValueError("need L > 0 and W >= 0")
    return math.sqrt(2.0 * density_bound * w_dist)


def gap_bound_shift(density_bound: float, kappa: float, eta: float,
                    w_x: float, w_y: float) -> float:
    """sqrt(2L(κ·W_X + η·W_Y)): bound from shift magnitudes in X and Y."""
    if density_bound <= 0 or min(kappa, eta, w_x, w_y) < 0:
        raise ValueError("need L > 0 and nonnegative kappa, eta, W_X, W_Y")
    return math.sqrt(2.0 * density_bound * (kappa * w_x + eta * w_y))


@dataclass(frozen=True)
class BoundInputs:
    """Inputs of the finite-sample coverage-gap bound.

    The dimension parameters sigma must exceed 2; lambda and sigma are user
    supplied (no estimator is provided for them).
    """

    density_bound: float  # L
    w_hat: float          # empirical score-space distance
    n: int
    m: int
    lambda_p: float
    lambda_q: float
    sigma_p: float
    sigma_q: float
    t_p: float
    t_q: float

    def __post_init__(self):
        if self.density_bound <= 0:
            raise ValueError("density bound L must be positive")
        if self.w_hat < 0:
            raise ValueError("empirical distance must be nonnegative")
        if self.n < 1 or self.m < 1:
            raise ValueError("sample counts must be positive")
        if self.sigma_p <= 2 or self.sigma_q <= 2:
            raise ValueError("sigma parameters must exceed 2")
        if self.t_p < 0 or self.t_q < 0:
            raise ValueError("deviation levels t must be nonnegative")


def empirical_gap_bound(b: BoundInputs) -> tuple[float, float]:
    """Finite-sample gap bound and the probability with which it holds.

    bound = sqrt(2L(Ŵ + λ_P n^(-1/σ_P) + λ_Q m^(-1/σ_Q) + t_P + t_Q)),
    confidence = (1 - e^(-2n t_P²))(1 - e^(-2m t_Q²)).
    """
    inner = (b.w_hat
             + b.lambda_p * b.n ** (-1.0 / b.sigma_p)
             + b.lambda_q * b.m ** (-1.0 / b.sigma_q)
             + b.t_p + b.t_q)
    if inner < 0:
        raise ValueError("bound argument became negative; check lambda inputs")
    bound = math.sqrt(2.0 * b.density_bound * inner)
    confidence = ((1.0 - math.exp(-2.0 * b.n * b.t_p**2))
                  * (1.0 - math.exp(-2.0 * b.m * b.t_q**2)))
    return bound, confidence


def estimate_kappa(features, sp_values) -> float:
    """Largest pairwise slope |s(x_i) - s(x_j)| / ||x_i - x_j||.

    A lower bound of the true Lipschitz constant, over pairs separated by
    more than 1e-12.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    s = np.asarray(sp_values, dtype=np.float64).ravel()
    if x.shape[0] != s.size or x.shape[0] < 2:
        raise ValueError("need matching features/values with n >= 2")
    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    ds = np.abs(s[:, None] - s[None, :])
    mask = dist > 1e-12
    if not mask.any():
        raise ValueError("all feature rows coincide")
    return float((ds[mask] / dist[mask]).max())


def estimate_eta(sp_values, sq_values, fp_values, fq_values) -> float:
    """Largest |s_P(x1) - s_Q(x2)| / |f_P(x1) - f_Q(x2)| over sample pairs.

    The four vectors are the score/concept functions evaluated on the P-side
    rows (sp, fp) and the Q-side rows (sq, fq); pairs with concept gap below
    1e-12 are skipped.
    """
    sp = np.asarray(sp_values, dtype=np.float64).ravel()
    sq = np.asarray(sq_values, dtype=np.float64).ravel()
    fp = np.asarray(fp_values, dtype=np.float64).ravel()
    fq = np.asarray(fq_values, dtype=np.float64).ravel()
    if sp.size != fp.size or sq.size != fq.size:
        raise ValueError("score and concept vectors must align per side")
    num = np.abs(sp[:, None] - sq[None, :])
    den = np.abs(fp[:, None] - fq[None, :])
    mask = den > 1e-12
    if not mask.any():
        raise ValueError("no sample pair with distinct concept values")
    return float((num[mask] / den[mask]).max())


def alpha_d(per_source_weighted_cal, per_source_scores, tau: float) -> float:
    """Worst per-source CDF gap at tau between weighted calibration scores
    and the source's own scores; the adaptive slack of the mixture coverage
    guarantee."""
    if len(per_source_weighted_cal) != len(per_source_scores):
        raise ValueError("need one weighted calibration distribution per source")
    if not per_source_scores:
        raise ValueError("need at least one source")
    return max(abs(w.cdf(tau) - s.cdf(tau))
               for w, s in zip(per_source_weighted_cal, per_source_scores))


def estimate_density_bound(score_sample, seed: int = 0) -> float:
    """Estimate of the score-density sup as the max KDE density.

    Evaluated at the sample points and on a 512-point grid across the
    sample range.  This is an estimate of L, not ground truth.
    """
    s = np.asarray(score_sample, dtype=np.float64).ravel()
    if s.size < 10:
        raise ValueError("need at least 10 scores to estimate the density bound")
    bandwidth = select_bandwidth(s, seed=seed)
    model = kde_fit(s, bandwidth)
    grid = np.linspace(s.min(), s.max(), 512)
    dens_samples = kde_density(model, s[:, None])
    dens_grid = kde_density(model, grid[:, None])
    return float(max(dens_samples.max(), dens_grid.max()))
