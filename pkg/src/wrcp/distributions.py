"""One-dimensional distributions of conformal scores and distances between them.

Everything here operates on the real line: weighted point masses
(:class:`EmpiricalDist`), piecewise-uniform densities
(:class:`PiecewiseUniformDist`) and shared-bin histograms
(:class:`HistogramPair`).  The Wasserstein-1 distance is computed exactly as
the area between the two CDFs on the merged breakpoint grid; a brute-force
minimum-cost matching (:func:`brute_force_ot`) is kept solely as a test
oracle and never used on real workloads.

All objects are immutable after construction and all operations are pure.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "EmpiricalDist",
    "PiecewiseUniformDist",
    "HistogramPair",
    "UndefinedCorrelationError",
    "cdf_at",
    "quantile",
    "wasserstein1",
    "kolmogorov",
    "tv_distance",
    "kl_divergence",
    "expectation_difference",
    "spearman",
    "brute_force_ot",
    "mixture",
    "average_ranks",
]

# Accumulated rounding slack used when comparing cumulative weights against
# probability levels; one float ulp-scale step, far below any real atom mass.
_CUM_TOL = 1e-12


class UndefinedCorrelationError(ValueError):
    """Raised when a rank vector has zero variance and Spearman is undefined."""


@dataclass(frozen=True, eq=False)
class EmpiricalDist:
    """Weighted point-mass distribution on the real line.

    ``values`` keep their construction order; a sorted view with co-permuted
    weights and cumulative weights is built once.  Weights are normalized to
    sum to one (raising if negative or all zero).
    """

    values: np.ndarray
    weights: np.ndarray
    sorted_values: np.ndarray = field(init=False, repr=False, compare=False)
    sorted_weights: np.ndarray = field(init=False, repr=False, compare=False)
    cum_weights: np.ndarray = field(init=False, repr=False, compare=False)
    sort_index: np.ndarray = field(init=False, repr=False, compare=False)

    def __init__(self, values, weights=None):
        values = np.asarray(values, dtype=np.float64).ravel()
        if values.size == 0:
            raise ValueError("empirical distribution needs at least one point")
        if not np.all(np.isfinite(values)):
            raise ValueError("all support values must be finite")
        if weights is None:
            weights = np.full(values.size, 1.0 / values.size)
        else:
            weights = np.asarray(weights, dtype=np.float64).ravel()
            if weights.size != values.size:
                raise ValueError(
                    f"{weights.size} weights for {values.size} values"
                )
            if not np.all(np.isfinite(weights)):
                raise ValueError("weights must be finite")
            if np.any(weights < 0):
                raise ValueError("weights must be nonnegative")
            total = weights.sum()
            if total <= 0:
                raise ValueError("weights sum to zero")
            weights = weights / total
        order = np.argsort(values, kind="stable")
        cum = np.cumsum(weights[order])
        cum[-1] = 1.0  # pin the top so quantile(p=1) is always defined
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "sort_index", order)
        object.__setattr__(self, "sorted_values", values[order])
        object.__setattr__(self, "sorted_weights", weights[order])
        object.__setattr__(self, "cum_weights", cum)

    def __len__(self) -> int:
        return self.values.size

    def cdf(self, v):
        """Right-continuous CDF: P(X <= v). Scalar or vectorized in v."""
        idx = np.searchsorted(self.sorted_values, v, side="right")
        cum = np.concatenate(([0.0], self.cum_weights))
        out = cum[idx]
        return float(out) if np.isscalar(v) else out

    def cdf_left(self, v):
        """Left limit of the CDF: P(X < v)."""
        idx = np.searchsorted(self.sorted_values, v, side="left")
        cum = np.concatenate(([0.0], self.cum_weights))
        out = cum[idx]
        return float(out) if np.isscalar(v) else out

    def mean(self) -> float:
        return float(np.dot(self.values, self.weights))

    def breakpoints(self) -> np.ndarray:
        return self.sorted_values

    def is_uniform(self, tol: float = 1e-9) -> bool:
        return bool(np.max(np.abs(self.weights - 1.0 / len(self))) <= tol)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(len(self), size=n, p=self.weights)
        return self.values[idx]


@dataclass(frozen=True, eq=False)
class PiecewiseUniformDist:
    """Density that is constant on each interval between breakpoints.

    ``breakpoints`` has one more entry than ``densities``; total mass must be
    1 within 1e-12.
    """

    breakpoints: np.ndarray
    densities: np.ndarray
    _cdf_at_breaks: np.ndarray = field(init=False, repr=False, compare=False)

    def __init__(self, breakpoints, densities):
        bp = np.asarray(breakpoints, dtype=np.float64).ravel()
        dens = np.asarray(densities, dtype=np.float64).ravel()
        if bp.size < 2 or dens.size != bp.size - 1:
            raise ValueError("need m+1 breakpoints for m densities, m >= 1")
        if not (np.all(np.isfinite(bp)) and np.all(np.isfinite(dens))):
            raise ValueError("breakpoints and densities must be finite")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly ascending")
        if np.any(dens < 0):
            raise ValueError("densities must be nonnegative")
        mass = float(np.sum(dens * np.diff(bp)))
        if abs(mass - 1.0) > 1e-12:
            raise ValueError(f"total mass {mass!r} is not 1 within 1e-12")
        cdf = np.concatenate(([0.0], np.cumsum(dens * np.diff(bp))))
        cdf[-1] = 1.0
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "densities", dens)
        object.__setattr__(self, "_cdf_at_breaks", cdf)

    def cdf(self, v):
        out = np.interp(v, self.breakpoints, self._cdf_at_breaks,
                        left=0.0, right=1.0)
        return float(out) if np.isscalar(v) else out

    # Continuous distribution: left limit equals the CDF itself.
    cdf_left = cdf

    def mean(self) -> float:
        lo, hi = self.breakpoints[:-1], self.breakpoints[1:]
        return float(np.sum(self.densities * (hi**2 - lo**2) / 2.0))

    def breakpoints_array(self) -> np.ndarray:
        return self.breakpoints

    def density_bound(self) -> float:
        return float(np.max(self.densities))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Inverse-CDF draws; intervals with zero density receive no mass."""
        pos = self.densities > 0
        starts = self.breakpoints[:-1][pos]
        dens = self.densities[pos]
        cum_lo = self._cdf_at_breaks[:-1][pos]
        cum_hi = self._cdf_at_breaks[1:][pos]
        u = rng.random(n)
        idx = np.clip(np.searchsorted(cum_hi, u, side="left"), 0, dens.size - 1)
        return starts[idx] + (u - cum_lo[idx]) / dens[idx]


@dataclass(frozen=True, eq=False)
class HistogramPair:
    """Two per-bin probability vectors over one shared set of bin edges."""

    edges: np.ndarray
    mass_a: np.ndarray
    mass_b: np.ndarray

    def __init__(self, edges, mass_a, mass_b):
        edges = np.asarray(edges, dtype=np.float64).ravel()
        mass_a = np.asarray(mass_a, dtype=np.float64).ravel()
        mass_b = np.asarray(mass_b, dtype=np.float64).ravel()
        if edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be ascending with >= 2 entries")
        for name, m in (("mass_a", mass_a), ("mass_b", mass_b)):
            if m.size != edges.size - 1:
                raise ValueError(f"{name} needs {edges.size - 1} bins")
            if np.any(m < 0):
                raise ValueError(f"{name} has negative mass")
            if abs(m.sum() - 1.0) > 1e-9:
                raise ValueError(f"{name} sums to {m.sum()!r}, not 1 within 1e-9")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "mass_a", mass_a)
        object.__setattr__(self, "mass_b", mass_b)

    @classmethod
    def from_samples(cls, samples_a, samples_b, edges=None) -> "HistogramPair":
        """Bin two sample sets on shared edges.

        Default edges: ⌈√min(n,m)⌉ equal-width bins over the merged sample
        range.  Explicit edges must cover both samples (values are clipped
        into the outermost bins).
        """
        a = np.asarray(samples_a, dtype=np.float64).ravel()
        b = np.asarray(samples_b, dtype=np.float64).ravel()
        if a.size == 0 or b.size == 0:
            raise ValueError("both sample sets must be nonempty")
        if edges is None:
            n_bins = int(math.ceil(math.sqrt(min(a.size, b.size))))
            lo = min(a.min(), b.min())
            hi = max(a.max(), b.max())
            if hi <= lo:
                lo, hi = lo - 0.5, hi + 0.5
            edges = np.linspace(lo, hi, n_bins + 1)
        else:
            edges = np.asarray(edges, dtype=np.float64).ravel()
        a = np.clip(a, edges[0], edges[-1])
        b = np.clip(b, edges[0], edges[-1])
        count_a, _ = np.histogram(a, bins=edges)
        count_b, _ = np.histogram(b, bins=edges)
        return cls(edges, count_a / a.size, count_b / b.size)

    @classmethod
    def from_histograms(cls, edges_a, mass_a, edges_b, mass_b) -> "HistogramPair":
        """Pair two pre-binned histograms; their edges must match exactly."""
        ea = np.asarray(edges_a, dtype=np.float64).ravel()
        eb = np.asarray(edges_b, dtype=np.float64).ravel()
        if ea.size != eb.size or np.any(ea != eb):
            raise ValueError("mismatched bin edges")
        return cls(ea, mass_a, mass_b)


# ---------------------------------------------------------------------------
# CDF-level operations


def cdf_at(dist, v: float) -> float:
    """Right-continuous CDF of an empirical or piecewise-uniform distribution."""
    return dist.cdf(v)


def quantile(dist: EmpiricalDist, p: float) -> float:
    """Generalized inverse CDF: smallest support value with F(v) >= p."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"quantile level must be in (0, 1], got {p}")
    idx = int(np.searchsorted(dist.cum_weights, p - _CUM_TOL, side="left"))
    return float(dist.sorted_values[idx])


def _breaks(dist) -> np.ndarray:
    if isinstance(dist, EmpiricalDist):
        return dist.sorted_values
    if isinstance(dist, PiecewiseUniformDist):
        return dist.breakpoints
    raise TypeError(f"unsupported distribution type {type(dist).__name__}")


def _segment_slopes(dist, grid: np.ndarray) -> np.ndarray:
    """CDF slope of ``dist`` on each open interval of the merged grid."""
    if isinstance(dist, EmpiricalDist):
        return np.zeros(grid.size - 1)
    mids = 0.5 * (grid[:-1] + grid[1:])
    idx = np.searchsorted(dist.breakpoints, mids, side="right") - 1
    inside = (idx >= 0) & (idx < dist.densities.size)
    slopes = np.zeros(grid.size - 1)
    slopes[inside] = dist.densities[idx[inside]]
    return slopes


def wasserstein1(a, b) -> float:
    """Order-1 Wasserstein distance: exact area between the two CDFs.

    Both CDFs are affine on every interval of the merged breakpoint grid
    (constant for point masses), so |F_a - F_b| integrates in closed form,
    splitting an interval at most once where the difference changes sign.
    """
    grid = np.unique(np.concatenate([_breaks(a), _breaks(b)]))
    if grid.size < 2:
        return 0.0
    d0 = a.cdf(grid[:-1]) - b.cdf(grid[:-1])
    ds = _segment_slopes(a, grid) - _segment_slopes(b, grid)
    h = np.diff(grid)
    d1 = d0 + ds * h
    same_sign = d0 * d1 >= 0
    area_same = 0.5 * h * (np.abs(d0) + np.abs(d1))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_star = np.where(ds != 0, -d0 / ds, 0.0)
    area_cross = 0.5 * (np.abs(d0) * t_star + np.abs(d1) * (h - t_star))
    return float(np.sum(np.where(same_sign, area_same, area_cross)))


def kolmogorov(a, b) -> float:
    """Supremum of |F_a - F_b|, checked at every atom and its left limit."""
    grid = np.unique(np.concatenate([_breaks(a), _breaks(b)]))
    gap_right = np.abs(a.cdf(grid) - b.cdf(grid))
    gap_left = np.abs(a.cdf_left(grid) - b.cdf_left(grid))
    return float(max(gap_right.max(), gap_left.max()))


def tv_distance(a, b=None) -> float:
    """Total variation distance.

    With a single :class:`HistogramPair` argument: half the L1 distance of
    the two mass vectors.  With two :class:`PiecewiseUniformDist` arguments:
    half the exact integral of |p_a - p_b| over the merged breakpoints.
    """
    if b is None:
        if not isinstance(a, HistogramPair):
            raise TypeError("single-argument form requires a HistogramPair")
        return float(0.5 * np.sum(np.abs(a.mass_a - a.mass_b)))
    if not (isinstance(a, PiecewiseUniformDist) and isinstance(b, PiecewiseUniformDist)):
        raise TypeError("two-argument form requires piecewise-uniform densities")
    grid = np.unique(np.concatenate([a.breakpoints, b.breakpoints]))
    da = _segment_slopes(a, grid)
    db = _segment_slopes(b, grid)
    return float(0.5 * np.sum(np.abs(da - db) * np.diff(grid)))


def kl_divergence(h: HistogramPair, eps: float = 1e-10) -> float:
    """Discrete KL divergence of mass_a from mass_b on the shared bins.

    Both vectors receive additive smoothing ``eps`` and are renormalized, so
    the result is always finite.
    """
    p = h.mass_a + eps
    q = h.mass_b + eps
    p = p / p.sum()
    q = q / q.sum()
    return float(np.sum(p * np.log(p / q)))


def expectation_difference(a: EmpiricalDist, b: EmpiricalDist) -> float:
    """Absolute difference of the two means."""
    return abs(a.mean() - b.mean())


def average_ranks(v) -> np.ndarray:
    """1-based ranks; tied values share the average of their rank positions."""
    v = np.asarray(v, dtype=np.float64).ravel()
    order = np.argsort(v, kind="stable")
    sv = v[order]
    new_group = np.concatenate(([True], sv[1:] != sv[:-1]))
    gid = np.cumsum(new_group) - 1
    pos = np.arange(1, v.size + 1, dtype=np.float64)
    group_mean = np.bincount(gid, weights=pos) / np.bincount(gid)
    ranks = np.empty(v.size)
    ranks[order] = group_mean[gid]
    return ranks


def spearman(xs, ys) -> float:
    """Rank correlation: Pearson coefficient of the average-rank vectors."""
    xs = np.asarray(xs, dtype=np.float64).ravel()
    ys = np.asarray(ys, dtype=np.float64).ravel()
    if xs.size != ys.size:
        raise ValueError("input vectors must have equal length")
    if xs.size < 3:
        raise ValueError("need at least 3 pairs")
    rx = average_ranks(xs) - (xs.size + 1) / 2.0
    ry = average_ranks(ys) - (ys.size + 1) / 2.0
    ssx = float(np.dot(rx, rx))
    ssy = float(np.dot(ry, ry))
    if ssx == 0.0 or ssy == 0.0:
        raise UndefinedCorrelationError("zero rank variance")
    return float(np.dot(rx, ry) / math.sqrt(ssx * ssy))


def brute_force_ot(a: EmpiricalDist, b: EmpiricalDist) -> float:
    """Minimum mean transport cost over all point matchings (test oracle).

    Only defined for uniform weights and equal support sizes, and refused
    above n = 8 (factorial blow-up).  Equals :func:`wasserstein1` on the
    same inputs.
    """
    n = len(a)
    if len(b) != n:
        raise ValueError("supports must have equal size")
    if not (a.is_uniform() and b.is_uniform()):
        raise ValueError("brute-force oracle requires uniform weights")
    if n > 8:
        raise ValueError("refusing brute force for n > 8")
    va, vb = a.values, b.values
    best = math.inf
    for perm in itertools.permutations(range(n)):
        cost = sum(abs(va[i] - vb[j]) for i, j in enumerate(perm)) / n
        if cost < best:
            best = cost
    return best


def mixture(dists, weights) -> EmpiricalDist:
    """Convex combination of empirical distributions on the merged support."""
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if len(dists) != weights.size:
        raise ValueError("one weight per component required")
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("mixture weights must be a probability vector")
    values = np.concatenate([d.values for d in dists])
    mass = np.concatenate([w * d.weights for w, d in zip(weights, dists)])
    return EmpiricalDist(values, mass)
