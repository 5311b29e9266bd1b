"""Gaussian kernel density estimation and likelihood-ratio calibration weights.

Feature densities are estimated with an isotropic Gaussian kernel; the
bandwidth is picked from a logarithmic grid by 5-fold cross-validated
held-out log-likelihood.  Density ratios between a target feature
distribution and the calibration feature distribution become the importance
weights attached to calibration conformal scores.

Features should be standardized before any of this (statistics taken from
the calibration set); :class:`FeatureScaler` holds the reusable parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "KdeModel",
    "BandwidthGrid",
    "FeatureScaler",
    "DegenerateWeightsError",
    "BandwidthSelectionError",
    "kde_fit",
    "kde_density",
    "kde_log_density",
    "default_bandwidth_grid",
    "select_bandwidth",
    "likelihood_ratio_weights",
]

RATIO_FLOOR = 1e-12
_EVAL_CHUNK = 512


class DegenerateWeightsError(ValueError):
    """All raw density ratios are zero; no usable calibration weights."""


class BandwidthSelectionError(ValueError):
    """Every candidate bandwidth scored -inf held-out log-likelihood."""


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError(f"expected an n x d sample matrix, got shape {x.shape}")
    return x


@dataclass(frozen=True, eq=False)
class KdeModel:
    """Fitted Gaussian KDE: stored samples, bandwidth, and dimension."""

    samples: np.ndarray
    bandwidth: float
    dim: int


@dataclass(frozen=True, eq=False)
class BandwidthGrid:
    """Ascending positive bandwidth candidates."""

    candidates: np.ndarray

    def __init__(self, candidates):
        c = np.asarray(candidates, dtype=np.float64).ravel()
        if c.size == 0 or np.any(c <= 0) or np.any(np.diff(c) <= 0):
            raise ValueError("candidates must be positive and strictly ascending")
        object.__setattr__(self, "candidates", c)


def default_bandwidth_grid() -> BandwidthGrid:
    """20 log-spaced candidates between 1e-2 and 10^0.5."""
    return BandwidthGrid(np.logspace(-2.0, 0.5, 20))


@dataclass(frozen=True)
class FeatureScaler:
    """Per-dimension standardization parameters, fit once on calibration data."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features) -> "FeatureScaler":
        x = _as_matrix(features)
        std = x.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        return cls(mean=x.mean(axis=0), std=std)

    def transform(self, features) -> np.ndarray:
        return (_as_matrix(features) - self.mean) / self.std


def kde_fit(samples, bandwidth: float) -> KdeModel:
    """Fit a Gaussian KDE; requires at least two finite samples and b > 0."""
    x = _as_matrix(samples)
    if x.shape[0] < 2:
        raise ValueError("kernel density estimation needs at least 2 samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    if not (np.isfinite(bandwidth) and bandwidth > 0):
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    return KdeModel(samples=x.copy(), bandwidth=float(bandwidth), dim=x.shape[1])


def kde_log_density(model: KdeModel, x) -> np.ndarray | float:
    """Log of the averaged-kernel density estimate.

    A 1-D input is a single d-vector (scalar result); an n x d matrix gives
    one value per row.
    """
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 1
    pts = arr[None, :] if scalar else _as_matrix(arr)
    if pts.shape[1] != model.dim:
        raise ValueError(f"points have dim {pts.shape[1]}, model has {model.dim}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("evaluation points must be finite")
    b = model.bandwidth
    log_norm = math.log(model.samples.shape[0]) \
        + model.dim * (0.5 * math.log(2.0 * math.pi) + math.log(b))
    out = np.empty(pts.shape[0])
    for start in range(0, pts.shape[0], _EVAL_CHUNK):
        chunk = pts[start:start + _EVAL_CHUNK]
        sq = ((chunk[:, None, :] - model.samples[None, :, :]) ** 2).sum(axis=2)
        expo = -sq / (2.0 * b * b)
        m = expo.max(axis=1)
        out[start:start + _EVAL_CHUNK] = \
            m + np.log(np.exp(expo - m[:, None]).sum(axis=1)) - log_norm
    return float(out[0]) if scalar else out


def kde_density(model: KdeModel, x) -> np.ndarray | float:
    """Density estimate (1/n)·Σ_i K(x - x_i, b); strictly positive."""
    ld = kde_log_density(model, x)
    return math.exp(ld) if np.isscalar(ld) else np.exp(ld)


def select_bandwidth(samples, grid: BandwidthGrid | None = None,
                     n_folds: int = 5, seed: int = 0) -> float:
    """Pick the grid bandwidth with the best 5-fold held-out log-likelihood.

    Fold assignment is a seeded permutation, so the selection is independent
    of evaluation order.  Ties break toward the larger bandwidth.
    """
    x = _as_matrix(samples)
    n = x.shape[0]
    if n < 10:
        raise ValueError(f"bandwidth selection needs >= 10 samples, got {n}")
    if grid is None:
        grid = default_bandwidth_grid()
    perm = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.intp)
    fold_of[perm] = np.arange(n) % n_folds
    best_b, best_score = None, -math.inf
    for b in grid.candidates:
        fold_means = []
        for f in range(n_folds):
            held = fold_of == f
            if not held.any() or (~held).sum() < 2:
                continue
            model = kde_fit(x[~held], b)
            fold_means.append(float(np.mean(kde_log_density(model, x[held]))))
        score = float(np.mean(fold_means))
        if math.isfinite(score) and score >= best_score:
            best_b, best_score = float(b), score
    if best_b is None:
        raise BandwidthSelectionError("no candidate achieved finite likelihood")
    return best_b


def likelihood_ratio_weights(cal_features, target_kde: KdeModel,
                             cal_kde: KdeModel,
                             floor: float = RATIO_FLOOR) -> np.ndarray:
    """Normalized density ratios target/calibration at the calibration points.

    The calibration density is floored at ``floor`` so ratios stay bounded;
    the result sums to one.
    """
    x = _as_matrix(cal_features)
    if target_kde.dim != x.shape[1] or cal_kde.dim != x.shape[1]:
        raise ValueError("KDE dimension does not match the feature matrix")
    num = np.asarray(kde_density(target_kde, x))
    den = np.maximum(np.asarray(kde_density(cal_kde, x)), floor)
    raw = num / den
    total = raw.sum()
    if total <= 0:
        raise DegenerateWeightsError("all density ratios vanished")
    return raw / total
