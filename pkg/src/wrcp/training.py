"""Differentiable 1-D Wasserstein distance and the regularized training loop.

The training objective sums per-source mean squared error with β times the
Wasserstein-1 distance between each source's score distribution and the
importance-weighted calibration score distribution.  Scores enter the
distance through their values only, so the subgradient of the distance with
respect to each support point is the signed transport mass assigned to it;
chaining through |h(x) - y| multiplies by the residual sign.

Likelihood-ratio weights are computed once before the loop (feature
densities do not change with the model); with β = 0 the regularizer branch
is skipped entirely, so the parameter trajectory is the plain empirical-risk
one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datagen import DatasetBundle
from .density import (
    BandwidthGrid,
    FeatureScaler,
    kde_fit,
    likelihood_ratio_weights,
    select_bandwidth,
)
from .distributions import EmpiricalDist
from .mlp import (
    GradBuffer,
    MlpModel,
    backward,
    mlp_forward,
    mlp_init,
    mse_loss,
    optimizer_init,
    optimizer_step,
)

__all__ = [
    "WassersteinGradResult",
    "TrainConfig",
    "EpochMetrics",
    "TrainingDivergedError",
    "VARIANTS",
    "wasserstein1_grad",
    "build_weighted_cal_dist",
    "compute_source_weights",
    "train",
    "wrcp_train",
    "wrcp_uw_train",
]

VARIANTS = ("wrcp", "wrcp_uw", "erm")


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the last finite epoch index."""

    def __init__(self, epoch: int, message: str):
        super().__init__(f"training diverged at epoch {epoch}: {message}")
        self.epoch = epoch


@dataclass(frozen=True, eq=False)
class WassersteinGradResult:
    """Distance plus one subgradient entry per support point of each input.

    Gradients are aligned with each distribution's construction-order
    ``values``; every entry is bounded by that point's probability mass.
    """

    distance: float
    grad_a: np.ndarray
    grad_b: np.ndarray


def wasserstein1_grad(a: EmpiricalDist, b: EmpiricalDist) -> WassersteinGradResult:
    """Quantile-aligned W1 with subgradients for both supports.

    Walk the merged cumulative-weight levels of the two sorted supports;
    each segment of mass couples one point of ``a`` with one point of ``b``
    and contributes mass·|v_a - v_b| to the distance and ±mass to the two
    subgradients (0 at exact ties).
    """
    ca, cb = a.cum_weights, b.cum_weights
    va, vb = a.sorted_values, b.sorted_values
    ga = np.zeros(va.size)
    gb = np.zeros(vb.size)
    distance = 0.0
    i = j = 0
    prev = 0.0
    while i < va.size and j < vb.size:
        level = min(ca[i], cb[j])
        seg = level - prev
        if seg > 0.0:
            diff = va[i] - vb[j]
            if diff > 0.0:
                distance += seg * diff
                ga[i] += seg
                gb[j] -= seg
            elif diff < 0.0:
                distance -= seg * diff
                ga[i] -= seg
                gb[j] += seg
        if ca[i] <= level:
            i += 1
        if cb[j] <= level:
            j += 1
        prev = level
    grad_a = np.empty_like(ga)
    grad_b = np.empty_like(gb)
    grad_a[a.sort_index] = ga
    grad_b[b.sort_index] = gb
    return WassersteinGradResult(distance=distance, grad_a=grad_a, grad_b=grad_b)


def build_weighted_cal_dist(cal_scores, cal_weights) -> EmpiricalDist:
    """Calibration score distribution carrying likelihood-ratio weights."""
    return EmpiricalDist(cal_scores, cal_weights)


@dataclass(frozen=True)
class TrainConfig:
    """Knobs of one training run."""

    beta: float = 0.0
    epochs: int = 200
    learning_rate: float = 1e-3
    seed: int = 0
    variant: str = "wrcp"

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    total_loss: float
    mse_sum: float
    wass_sum: float
    per_source_w: tuple[float, ...]


def compute_source_weights(bundle: DatasetBundle, seed: int = 0,
                           grid: BandwidthGrid | None = None) -> list[np.ndarray]:
    """Per-source likelihood-ratio weights on the calibration points.

    Features are standardized with calibration statistics; each density gets
    its own cross-validated bandwidth.  Computed once per run — the feature
    densities do not depend on the model.
    """
    scaler = FeatureScaler.fit(bundle.calibration[0])
    cal_z = scaler.transform(bundle.calibration[0])
    cal_kde = kde_fit(cal_z, select_bandwidth(cal_z, grid, seed=seed))
    weights = []
    for x_src, _ in bundle.sources:
        src_z = scaler.transform(x_src)
        src_kde = kde_fit(src_z, select_bandwidth(src_z, grid, seed=seed))
        weights.append(likelihood_ratio_weights(cal_z, src_kde, cal_kde))
    return weights


def _sign(residuals: np.ndarray) -> np.ndarray:
    # subgradient of |r| with the 0-at-0 convention
    return np.sign(residuals)


def train(bundle: DatasetBundle, cfg: TrainConfig,
          source_weights: list[np.ndarray] | None = None,
          ) -> tuple[MlpModel, list[EpochMetrics]]:
    """Optimize the model on the bundle per the configured variant.

    Returns the final model and one metrics row per epoch (losses evaluated
    at the pre-update parameters).  Deterministic given ``cfg.seed``.
    """
    k = len(bundle.sources)
    if k < 1:
        raise ValueError("bundle has no sources")
    cal_x, cal_y = bundle.calibration
    model = mlp_init(bundle.dim, seed=cfg.seed)
    state = optimizer_init(model, learning_rate=cfg.learning_rate)

    regularized = cfg.variant != "erm" and cfg.beta > 0.0
    if regularized and cfg.variant == "wrcp":
        if source_weights is None:
            source_weights = compute_source_weights(bundle, seed=cfg.seed)
        elif len(source_weights) != k:
            raise ValueError("need one weight vector per source")

    metrics: list[EpochMetrics] = []
    for epoch in range(cfg.epochs):
        grads = GradBuffer.zeros_like(model)
        mse_sum = 0.0
        src_preds = []
        for x_src, y_src in bundle.sources:
            preds = mlp_forward(model, x_src)
            src_preds.append(preds)
            loss, g = mse_loss(preds, y_src)
            mse_sum += loss
            grads.add_(backward(model, g, x_src))

        wass_sum = 0.0
        per_source_w = [0.0] * k
        if regularized:
            cal_preds = mlp_forward(model, cal_x)
            cal_scores = np.abs(cal_preds - cal_y)
            cal_sign = _sign(cal_preds - cal_y)
            cal_upstream = np.zeros_like(cal_scores)
            for idx, (x_src, y_src) in enumerate(bundle.sources):
                src_scores = np.abs(src_preds[idx] - y_src)
                if cfg.variant == "wrcp":
                    cal_dist = build_weighted_cal_dist(cal_scores, source_weights[idx])
                else:
                    cal_dist = EmpiricalDist(cal_scores)
                src_dist = EmpiricalDist(src_scores)
                res = wasserstein1_grad(cal_dist, src_dist)
                wass_sum += res.distance
                per_source_w[idx] = res.distance
                cal_upstream += cfg.beta * res.grad_a * cal_sign
                src_upstream = cfg.beta * res.grad_b * _sign(src_preds[idx] - y_src)
                grads.add_(backward(model, src_upstream, x_src))
            grads.add_(backward(model, cal_upstream, cal_x))

        total = mse_sum + cfg.beta * wass_sum
        if not math.isfinite(total):
            raise TrainingDivergedError(
                epoch, f"mse_sum={mse_sum!r} wass_sum={wass_sum!r}")
        metrics.append(EpochMetrics(epoch=epoch, total_loss=total,
                                    mse_sum=mse_sum, wass_sum=wass_sum,
                                    per_source_w=tuple(per_source_w)))
        optimizer_step(model, grads, state)
    return model, metrics


def wrcp_train(bundle: DatasetBundle, cfg: TrainConfig,
               source_weights: list[np.ndarray] | None = None):
    """Weighted-regularizer training (β = 0 degenerates to plain risk)."""
    if cfg.variant != "wrcp":
        raise ValueError("config variant must be 'wrcp'")
    return train(bundle, cfg, source_weights=source_weights)


def wrcp_uw_train(bundle: DatasetBundle, cfg: TrainConfig):
    """Regularizer against the unweighted calibration score distribution."""
    if cfg.variant != "wrcp_uw":
        raise ValueError("config variant must be 'wrcp_uw'")
    return train(bundle, cfg)
