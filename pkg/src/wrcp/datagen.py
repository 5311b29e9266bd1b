"""Synthetic multi-source regression data with controllable shifts.

Each source draws features from its own Gaussian (means on a circle whose
radius is the covariate-shift knob) and targets from a per-source concept
function plus Gaussian noise (the concept tags are the concept-shift knob).
Test sets are mixtures of the source laws with weights drawn uniformly on
the simplex.  Everything is seeded and reproduces byte-for-byte through
serialization.

A generic CSV loader ingests externally collected source-labeled rows and
splits them into training / pooled-calibration / mixed-test parts.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "SyntheticTask",
    "DatasetBundle",
    "CsvSchema",
    "default_task",
    "f1_style_task",
    "gen_synthetic",
    "make_mixture_test",
    "draw_source",
    "concept_value",
    "feature_log_density",
    "oracle_mixture_weights",
    "save_bundle",
    "load_bundle",
    "load_csv",
]

CONCEPT_TAGS = ("linear", "scale", "offset")


def _base_fn(x: np.ndarray) -> np.ndarray:
    out = np.sin(x[:, 0])
    if x.shape[1] >= 2:
        out = out + 0.5 * x[:, 1]
    return out


@dataclass(frozen=True, eq=False)
class SyntheticTask:
    """Generative description of one multi-source regression problem."""

    k: int
    d: int
    feature_means: np.ndarray   # (k, d)
    feature_scales: np.ndarray  # (k,)
    concepts: tuple[tuple[str, float], ...]
    noise_scales: np.ndarray    # (k,)
    seed: int
    base_level: float = 0.0

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("need at least 2 sources")
        if self.d < 1:
            raise ValueError("feature dimension must be >= 1")
        means = np.asarray(self.feature_means, dtype=np.float64)
        scales = np.asarray(self.feature_scales, dtype=np.float64)
        noise = np.asarray(self.noise_scales, dtype=np.float64)
        if means.shape != (self.k, self.d):
            raise ValueError("feature_means must be k x d")
        if scales.shape != (self.k,) or np.any(scales <= 0):
            raise ValueError("feature_scales must be k positive reals")
        if noise.shape != (self.k,) or np.any(noise < 0):
            raise ValueError("noise_scales must be k nonnegative reals")
        if len(self.concepts) != self.k:
            raise ValueError("one concept spec per source required")
        for tag, _ in self.concepts:
            if tag not in CONCEPT_TAGS:
                raise ValueError(f"unknown concept tag {tag!r}")
        object.__setattr__(self, "feature_means", means)
        object.__setattr__(self, "feature_scales", scales)
        object.__setattr__(self, "noise_scales", noise)


def default_task(k: int = 3, d: int = 2, cov_radius: float = 1.5,
                 concept_strengths=None, noise_scale: float = 0.1,
                 seed: int = 0) -> SyntheticTask:
    """The desk-scale benchmark family: source feature means on a circle,
    concept functions base(x) + c_i·x_1 with per-source strength c_i."""
    if concept_strengths is None:
        concept_strengths = np.linspace(-1.0, 1.0, k)
    angles = 2.0 * math.pi * np.arange(k) / k
    means = np.zeros((k, d))
    means[:, 0] = cov_radius * np.cos(angles)
    if d >= 2:
        means[:, 1] = cov_radius * np.sin(angles)
    return SyntheticTask(
        k=k, d=d, feature_means=means,
        feature_scales=np.ones(k),
        concepts=tuple(("linear", float(c)) for c in concept_strengths),
        noise_scales=np.full(k, noise_scale),
        seed=seed)


def f1_style_task(seed: int = 0, k: int = 3, d: int = 2,
                  cov_radius: float = 1.5, noise_scale: float = 0.1) -> SyntheticTask:
    """Concept modifications in the relative/inverse/additive style.

    One xi ~ N(0, 10) is drawn per source (so each f_i is deterministic);
    the inverse style clamps |xi| >= 0.5 to keep 1/xi bounded.  Targets sit
    around a large base level so that relative scaling moves the mean, as it
    does for sound-pressure-style data.
    """
    rng = np.random.default_rng(seed)
    xi = rng.normal(0.0, 10.0, size=3)
    inv = xi[1]
    if abs(inv) < 0.5:
        inv = 0.5 if inv >= 0 else -0.5
    styles = [("scale", float(xi[0] / 1000.0)),
              ("scale", float(1.0 / inv)),
              ("offset", float(xi[2]))]
    concepts = tuple(styles[i % 3] for i in range(k))
    base = default_task(k=k, d=d, cov_radius=cov_radius,
                        noise_scale=noise_scale, seed=seed)
    return SyntheticTask(k=k, d=d, feature_means=base.feature_means,
                         feature_scales=base.feature_scales,
                         concepts=concepts, noise_scales=base.noise_scales,
                         seed=seed, base_level=125.0)


def concept_value(task: SyntheticTask, source: int, x) -> np.ndarray:
    """Ground-truth concept function f_i evaluated on feature rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    tag, c = task.concepts[source]
    base = _base_fn(x) + task.base_level
    if tag == "linear":
        return base + c * x[:, 0]
    if tag == "scale":
        return base * (1.0 + c)
    return base + c


def feature_log_density(task: SyntheticTask, source: int, x) -> np.ndarray:
    """Oracle log density of source i's Gaussian feature law."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    mean = task.feature_means[source]
    scale = task.feature_scales[source]
    sq = ((x - mean) ** 2).sum(axis=1)
    return -0.5 * task.d * math.log(2.0 * math.pi) \
        - task.d * math.log(scale) - sq / (2.0 * scale * scale)


def oracle_mixture_weights(task: SyntheticTask, mix_weights, x) -> np.ndarray:
    """Exact likelihood-ratio weights of a known mixture over the uniform
    calibration mixture, evaluated on calibration feature rows."""
    mix_weights = np.asarray(mix_weights, dtype=np.float64)
    dens = np.stack([np.exp(feature_log_density(task, i, x))
                     for i in range(task.k)])
    target = mix_weights @ dens
    cal = dens.mean(axis=0)
    raw = target / np.maximum(cal, 1e-300)
    return raw / raw.sum()


def draw_source(task: SyntheticTask, source: int, n: int,
                rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """n fresh draws from source i's generative law."""
    x = task.feature_means[source] + task.feature_scales[source] \
        * rng.standard_normal((n, task.d))
    y = concept_value(task, source, x) \
        + task.noise_scales[source] * rng.standard_normal(n)
    return x, y


@dataclass(eq=False)
class DatasetBundle:
    """Source samples, pooled calibration samples, and mixture test sets."""

    sources: list[tuple[np.ndarray, np.ndarray]]
    calibration: tuple[np.ndarray, np.ndarray]
    tests: list[tuple[np.ndarray, np.ndarray, np.ndarray]]  # (weights, X, y)
    task: SyntheticTask | None = None
    meta: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.sources)

    @property
    def dim(self) -> int:
        return self.calibration[0].shape[1]


def gen_synthetic(task: SyntheticTask, n_per_source: int, n_cal: int,
                  n_test_sets: int, m_per_test: int) -> DatasetBundle:
    """Generate a full bundle: per-source samples, equally pooled calibration
    samples, and mixture test sets with simplex-uniform weights."""
    if min(n_per_source, n_cal, n_test_sets, m_per_test) < 1:
        raise ValueError("all sizes must be >= 1")
    root = np.random.default_rng(task.seed)
    source_seeds = root.integers(2**63, size=task.k)
    cal_seed = int(root.integers(2**63))
    test_seeds = root.integers(2**63, size=n_test_sets)

    sources = [draw_source(task, i, n_per_source,
                           np.random.default_rng(int(source_seeds[i])))
               for i in range(task.k)]

    cal_rng = np.random.default_rng(cal_seed)
    counts = [n_cal // task.k + (1 if i < n_cal % task.k else 0)
              for i in range(task.k)]
    cal_parts = [draw_source(task, i, counts[i], cal_rng)
                 for i in range(task.k)]
    cal_x = np.concatenate([p[0] for p in cal_parts])
    cal_y = np.concatenate([p[1] for p in cal_parts])
    perm = cal_rng.permutation(n_cal)
    calibration = (cal_x[perm], cal_y[perm])

    tests = [make_mixture_test(task, "random", m_per_test, int(test_seeds[j]))
             for j in range(n_test_sets)]
    meta = {
        "kind": "synthetic",
        "n_per_source": str(n_per_source),
        "n_cal": str(n_cal),
        "n_test_sets": str(n_test_sets),
        "m_per_test": str(m_per_test),
    }
    return DatasetBundle(sources=sources, calibration=calibration,
                         tests=tests, task=task, meta=meta)


def make_mixture_test(task: SyntheticTask, weights, m: int, seed: int,
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One test set: rows drawn source-by-row from a weighted source mixture.

    ``weights`` may be an explicit k-simplex vector or the string "random"
    (weights drawn uniformly on the simplex from the seed).
    """
    rng = np.random.default_rng(seed)
    if isinstance(weights, str):
        if weights != "random":
            raise ValueError("weights must be a simplex vector or 'random'")
        w = rng.dirichlet(np.ones(task.k))
    else:
        w = np.asarray(weights, dtype=np.float64).ravel()
        if w.size != task.k or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must lie on the k-simplex")
    idx = rng.choice(task.k, size=m, p=w / w.sum())
    x = np.empty((m, task.d))
    y = np.empty(m)
    for i in range(task.k):
        mask = idx == i
        if mask.any():
            x[mask], y[mask] = draw_source(task, i, int(mask.sum()), rng)
    return w, x, y


# ---------------------------------------------------------------------------
# Serialization


def _write_xy_csv(path: Path, x: np.ndarray, y: np.ndarray) -> None:
    d = x.shape[1]
    with open(path, "w", newline="") as fh:
        fh.write(",".join([f"x_{j + 1}" for j in range(d)] + ["y"]) + "\n")
        for row, target in zip(x, y):
            fh.write(",".join(repr(float(v)) for v in row)
                     + f",{repr(float(target))}\n")


def _read_xy_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], rows[1:]
    d = len(header) - 1
    x = np.array([[float(v) for v in r[:d]] for r in data])
    y = np.array([float(r[d]) for r in data])
    return x.reshape(len(data), d), y


def save_bundle(bundle: DatasetBundle, path) -> None:
    """Serialize to a directory: sources/, calibration.csv, tests/, meta.txt."""
    root = Path(path)
    (root / "sources").mkdir(parents=True, exist_ok=True)
    (root / "tests").mkdir(parents=True, exist_ok=True)
    for i, (x, y) in enumerate(bundle.sources):
        _write_xy_csv(root / "sources" / f"source_{i}.csv", x, y)
    _write_xy_csv(root / "calibration.csv", *bundle.calibration)
    for j, (w, x, y) in enumerate(bundle.tests):
        _write_xy_csv(root / "tests" / f"test_{j}.csv", x, y)
        (root / "tests" / f"test_{j}.weights").write_text(
            ",".join(repr(float(v)) for v in w) + "\n")
    lines = dict(bundle.meta)
    lines["k"] = str(bundle.k)
    lines["d"] = str(bundle.dim)
    if bundle.task is not None:
        t = bundle.task
        lines["seed"] = str(t.seed)
        lines["feature_means"] = ",".join(repr(float(v))
                                          for v in t.feature_means.ravel())
        lines["feature_scales"] = ",".join(repr(float(v))
                                           for v in t.feature_scales)
        lines["noise_scales"] = ",".join(repr(float(v)) for v in t.noise_scales)
        lines["concepts"] = ";".join(f"{tag}:{repr(float(c))}"
                                     for tag, c in t.concepts)
        lines["base_level"] = repr(float(t.base_level))
    with open(root / "meta.txt", "w", newline="") as fh:
        for key in sorted(lines):
            fh.write(f"{key}={lines[key]}\n")


def load_bundle(path) -> DatasetBundle:
    root = Path(path)
    meta = {}
    for line in (root / "meta.txt").read_text().splitlines():
        key, _, value = line.partition("=")
        meta[key] = value
    k = int(meta["k"])
    d = int(meta["d"])
    sources = [_read_xy_csv(root / "sources" / f"source_{i}.csv")
               for i in range(k)]
    calibration = _read_xy_csv(root / "calibration.csv")
    tests = []
    j = 0
    while (root / "tests" / f"test_{j}.csv").exists():
        x, y = _read_xy_csv(root / "tests" / f"test_{j}.csv")
        w = np.array([float(v) for v in
                      (root / "tests" / f"test_{j}.weights").read_text().split(",")])
        tests.append((w, x, y))
        j += 1
    task = None
    if meta.get("kind") == "synthetic" and "concepts" in meta:
        concepts = tuple((part.split(":")[0], float(part.split(":")[1]))
                         for part in meta["concepts"].split(";"))
        task = SyntheticTask(
            k=k, d=d,
            feature_means=np.array([float(v) for v in
                                    meta["feature_means"].split(",")]).reshape(k, d),
            feature_scales=np.array([float(v) for v in
                                     meta["feature_scales"].split(",")]),
            concepts=concepts,
            noise_scales=np.array([float(v) for v in
                                   meta["noise_scales"].split(",")]),
            seed=int(meta["seed"]),
            base_level=float(meta.get("base_level", "0.0")))
    return DatasetBundle(sources=sources, calibration=calibration,
                         tests=tests, task=task, meta=meta)


# ---------------------------------------------------------------------------
# External CSV ingestion


@dataclass(frozen=True)
class CsvSchema:
    """Split parameters for source-labeled CSV ingestion."""

    train_frac: float = 0.5
    cal_frac: float = 0.5
    n_test_sets: int = 10
    m_per_test: int = 200
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.train_frac < 1.0 and 0.0 < self.cal_frac < 1.0):
            raise ValueError("fractions must lie strictly between 0 and 1")
        if self.n_test_sets < 1 or self.m_per_test < 1:
            raise ValueError("test-set counts must be positive")


class CsvParseError(ValueError):
    """Malformed input file; message carries the 1-based line number."""


def load_csv(path, schema: CsvSchema) -> DatasetBundle:
    """Ingest header ``source_id,x_1..x_d,y`` rows and split them.

    Per source: a training part is sampled without replacement, the
    remainder splits into a calibration part and a test part; calibration
    parts are unified, and each test set mixes the per-source test parts
    with replacement under simplex-uniform weights.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise CsvParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 3 or header[0] != "source_id" or header[-1] != "y":
        raise CsvParseError(
            f"{path}: line 1: header must be source_id,x_1..x_d,y")
    d = len(header) - 2
    if header[1:-1] != [f"x_{j + 1}" for j in range(d)]:
        raise CsvParseError(f"{path}: line 1: feature columns must be x_1..x_{d}")
    by_source: dict[int, list[list[float]]] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != d + 2:
            raise CsvParseError(
                f"{path}: line {lineno}: expected {d + 2} fields, got {len(row)}")
        try:
            sid = int(row[0])
            vals = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise CsvParseError(f"{path}: line {lineno}: {exc}") from None
        by_source.setdefault(sid, []).append(vals)
    if not by_source:
        raise CsvParseError(f"{path}: no data rows")

    rng = np.random.default_rng(schema.seed)
    sources, cal_parts, test_parts = [], [], []
    for sid in sorted(by_source):
        arr = np.asarray(by_source[sid])
        n = arr.shape[0]
        perm = rng.permutation(n)
        n_train = max(1, int(round(schema.train_frac * n)))
        rest = perm[n_train:]
        n_cal = int(math.ceil(schema.cal_frac * rest.size))
        train = arr[perm[:n_train]]
        sources.append((train[:, :d], train[:, d]))
        cal_parts.append(arr[rest[:n_cal]])
        test_parts.append(arr[rest[n_cal:]])

    if not any(p.shape[0] for p in cal_parts):
        raise CsvParseError(
            f"{path}: no rows left for calibration; lower train_frac")
    cal = np.concatenate([p for p in cal_parts if p.shape[0]])
    calibration = (cal[:, :d], cal[:, d])

    k = len(sources)
    has_test = np.array([p.shape[0] > 0 for p in test_parts])
    if not has_test.any():
        raise CsvParseError(
            f"{path}: no rows left for test mixing; lower train_frac/cal_frac")
    tests = []
    for _ in range(schema.n_test_sets):
        w = rng.dirichlet(np.ones(k))
        # sources without test rows cannot contribute; renormalize over the rest
        w = np.where(has_test, w, 0.0)
        w = w / w.sum()
        idx = rng.choice(k, size=schema.m_per_test, p=w)
        picked = []
        for i in range(k):
            count = int((idx == i).sum())
            if count:
                rows_i = test_parts[i][rng.integers(test_parts[i].shape[0],
                                                    size=count)]
                picked.append(rows_i)
        block = np.concatenate(picked)
        tests.append((w, block[:, :d], block[:, d]))
    meta = {"kind": "csv", "path": str(path)}
    return DatasetBundle(sources=sources, calibration=calibration,
                         tests=tests, task=None, meta=meta)
