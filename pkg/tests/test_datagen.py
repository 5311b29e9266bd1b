import numpy as np
import pytest

from wrcp.datagen import (
    CsvParseError,
    CsvSchema,
    DatasetBundle,
    SyntheticTask,
    concept_value,
    default_task,
    draw_source,
    f1_style_task,
    feature_log_density,
    gen_synthetic,
    load_bundle,
    load_csv,
    make_mixture_test,
    oracle_mixture_weights,
    save_bundle,
)


def small_bundle(seed=0, **kw):
    task = default_task(seed=seed, **kw)
    return gen_synthetic(task, n_per_source=50, n_cal=60, n_test_sets=4,
                         m_per_test=40)


class TestTaskValidation:
    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            default_task(k=1)
        with pytest.raises(ValueError):
            SyntheticTask(k=2, d=1, feature_means=np.zeros((2, 2)),
                          feature_scales=np.ones(2),
                          concepts=(("linear", 0.0), ("linear", 1.0)),
                          noise_scales=np.zeros(2), seed=0)
        with pytest.raises(ValueError):
            SyntheticTask(k=2, d=1, feature_means=np.zeros((2, 1)),
                          feature_scales=np.ones(2),
                          concepts=(("warp", 0.0), ("linear", 1.0)),
                          noise_scales=np.zeros(2), seed=0)


class TestGeneration:
    def test_noiseless_targets_equal_concept(self):
        task = default_task(noise_scale=0.0, seed=3)
        x, y = draw_source(task, 1, 100, np.random.default_rng(0))
        assert np.allclose(y, concept_value(task, 1, x))

    def test_identical_sources_indistinguishable(self):
        task = SyntheticTask(
            k=3, d=1, feature_means=np.zeros((3, 1)),
            feature_scales=np.ones(3),
            concepts=tuple(("linear", 0.7) for _ in range(3)),
            noise_scales=np.full(3, 0.2), seed=5)
        bundle = gen_synthetic(task, 400, 100, 2, 50)
        # two-sample Kolmogorov statistic below the 1% critical value
        ys = [np.sort(b[1]) for b in bundle.sources[:2]]
        grid = np.concatenate(ys)
        f1 = np.searchsorted(ys[0], grid, side="right") / 400
        f2 = np.searchsorted(ys[1], grid, side="right") / 400
        ks = np.abs(f1 - f2).max()
        critical = 1.63 * np.sqrt(2 / 400)  # c(0.01)·sqrt((n+m)/(n·m))
        assert ks < critical

    def test_f1_style_means_separate(self):
        task = f1_style_task(seed=11, cov_radius=0.0)
        bundle = gen_synthetic(task, 300, 100, 2, 50)
        means = [b[1].mean() for b in bundle.sources]
        ses = [b[1].std(ddof=1) / np.sqrt(len(b[1])) for b in bundle.sources]
        for i in range(3):
            for j in range(i + 1, 3):
                pooled = np.hypot(ses[i], ses[j])
                assert abs(means[i] - means[j]) > 3 * pooled

    def test_calibration_pooled_equally(self):
        bundle = small_bundle()
        assert bundle.calibration[0].shape == (60, 2)
        #内部 split is k equal parts (60 = 3 * 20)
        assert bundle.k == 3

    def test_residuals_match_noise_law(self):
        task = default_task(noise_scale=0.3, seed=9)
        x, y = draw_source(task, 0, 4000, np.random.default_rng(1))
        resid = (y - concept_value(task, 0, x)) / 0.3
        n = resid.size
        assert abs(resid.mean()) < 3 / np.sqrt(n)
        assert abs(resid.var(ddof=1) - 1.0) < 3 * np.sqrt(2.0 / (n - 1))

    def test_reproducible(self):
        a = small_bundle(seed=42)
        b = small_bundle(seed=42)
        assert np.array_equal(a.calibration[0], b.calibration[0])
        for (xa, ya), (xb, yb) in zip(a.sources, b.sources):
            assert np.array_equal(xa, xb) and np.array_equal(ya, yb)
        for (wa, xa, ya), (wb, xb, yb) in zip(a.tests, b.tests):
            assert np.array_equal(wa, wb) and np.array_equal(xa, xb)

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            gen_synthetic(default_task(), 0, 10, 1, 10)


class TestMixture:
    def test_one_hot_weights(self):
        task = default_task(seed=1)
        w, x, y = make_mixture_test(task, [0.0, 1.0, 0.0], 500, seed=3)
        # all rows follow source 1's law: feature mean near its center
        assert np.allclose(x.mean(axis=0), task.feature_means[1], atol=0.2)

    def test_uniform_weights_concentrate(self):
        task = default_task(seed=1)
        w, x, y = make_mixture_test(task, np.ones(3) / 3, 30_000, seed=4)
        for i in range(3):
            # classify rows by nearest source center
            dists = np.stack([np.linalg.norm(x - task.feature_means[j], axis=1)
                              for j in range(3)])
            share = np.mean(dists.argmin(axis=0) == i)
            assert abs(share - 1 / 3) < 0.02

    def test_seeds_differ_but_statistics_agree(self):
        task = default_task(seed=1)
        _, x1, y1 = make_mixture_test(task, np.ones(3) / 3, 4000, seed=5)
        _, x2, y2 = make_mixture_test(task, np.ones(3) / 3, 4000, seed=6)
        assert not np.array_equal(x1, x2)
        assert abs(y1.mean() - y2.mean()) < 4 * y1.std() / np.sqrt(4000)

    def test_off_simplex_rejected(self):
        with pytest.raises(ValueError):
            make_mixture_test(default_task(), [0.5, 0.6, 0.1], 10, 0)


class TestOracleDensities:
    def test_log_density_is_gaussian(self):
        task = default_task(seed=0)
        x = np.zeros((1, 2))
        ld = feature_log_density(task, 0, x)
        mean = task.feature_means[0]
        expected = -np.log(2 * np.pi) - 0.5 * np.sum(mean**2)
        assert ld[0] == pytest.approx(expected)

    def test_oracle_weights_uniform_for_uniform_mixture(self):
        task = default_task(seed=0)
        x, _ = draw_source(task, 0, 50, np.random.default_rng(2))
        w = oracle_mixture_weights(task, np.ones(3) / 3, x)
        assert np.allclose(w, 1.0 / 50, atol=1e-12)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        bundle = small_bundle(seed=17)
        save_bundle(bundle, tmp_path / "b")
        loaded = load_bundle(tmp_path / "b")
        assert loaded.k == bundle.k and loaded.dim == bundle.dim
        assert np.array_equal(loaded.calibration[0], bundle.calibration[0])
        assert np.array_equal(loaded.tests[2][0], bundle.tests[2][0])
        assert loaded.task is not None
        assert loaded.task.concepts == bundle.task.concepts

    def test_byte_identical_across_runs(self, tmp_path):
        for name in ("one", "two"):
            save_bundle(small_bundle(seed=23), tmp_path / name)
        a = sorted((tmp_path / "one").rglob("*"))
        b = sorted((tmp_path / "two").rglob("*"))
        assert [p.name for p in a] == [p.name for p in b]
        for pa, pb in zip(a, b):
            if pa.is_file():
                assert pa.read_bytes() == pb.read_bytes(), pa.name


class TestCsvLoader:
    def write_csv(self, path, lines):
        path.write_text("\n".join(lines) + "\n")

    def test_hand_file_grouping(self, tmp_path):
        lines = ["source_id,x_1,y"]
        # source 0: 4 rows, source 1: 4 rows
        for i in range(4):
            lines.append(f"0,{i}.0,{i * 10}.0")
        for i in range(4):
            lines.append(f"1,{i + 100}.0,{i}.5")
        path = tmp_path / "data.csv"
        self.write_csv(path, lines)
        bundle = load_csv(path, CsvSchema(train_frac=0.5, cal_frac=0.5,
                                          n_test_sets=2, m_per_test=8, seed=0))
        assert bundle.k == 2
        assert bundle.sources[0][0].shape == (2, 1)  # half of 4 rows
        assert np.all(bundle.sources[0][0] < 50)      # grouping respected
        assert np.all(bundle.sources[1][0] >= 100)
        total = sum(s[0].shape[0] for s in bundle.sources) \
            + bundle.calibration[0].shape[0]
        assert total == 6  # 4 train + 2 calibration (ceil of half the rest)
        assert len(bundle.tests) == 2

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(CsvParseError):
            load_csv(path, CsvSchema())

    def test_single_source(self, tmp_path):
        lines = ["source_id,x_1,y"] + [f"0,{i}.0,{i}.0" for i in range(12)]
        path = tmp_path / "single.csv"
        self.write_csv(path, lines)
        bundle = load_csv(path, CsvSchema(n_test_sets=3, m_per_test=5, seed=1))
        assert bundle.k == 1
        assert all(np.allclose(t[0], [1.0]) for t in bundle.tests)

    def test_malformed_row_reports_line(self, tmp_path):
        lines = ["source_id,x_1,y", "0,1.0,2.0", "0,oops,3.0"]
        path = tmp_path / "bad.csv"
        self.write_csv(path, lines)
        with pytest.raises(CsvParseError, match="line 3"):
            load_csv(path, CsvSchema())

    def test_missing_column(self, tmp_path):
        lines = ["source_id,x_1,y", "0,1.0"]
        path = tmp_path / "short.csv"
        self.write_csv(path, lines)
        with pytest.raises(CsvParseError, match="line 2"):
            load_csv(path, CsvSchema())
