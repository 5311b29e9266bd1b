import numpy as np
import pytest

from wrcp.mlp import (
    GradBuffer,
    MlpModel,
    backward,
    load_checkpoint,
    mlp_forward,
    mlp_init,
    mse_loss,
    optimizer_init,
    optimizer_step,
    param_count,
    save_checkpoint,
)


def finite_diff_grads(model, loss_fn, step=1e-4):
    """Central differences of loss_fn(model) over every parameter."""
    grads = GradBuffer.zeros_like(model)
    for p, g in zip(model.params(), grads.params()):
        flat_p = p.ravel()
        flat_g = g.ravel()
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + step
            hi = loss_fn(model)
            flat_p[i] = orig - step
            lo = loss_fn(model)
            flat_p[i] = orig
            flat_g[i] = (hi - lo) / (2 * step)
    return grads


def agreement_fraction(analytic, numeric, rel_tol=1e-3):
    a = np.concatenate([p.ravel() for p in analytic.params()])
    n = np.concatenate([p.ravel() for p in numeric.params()])
    scale = np.maximum(np.abs(a) + np.abs(n), 1e-6)
    return float(np.mean(np.abs(a - n) / scale <= rel_tol))


class TestForward:
    def test_zero_parameters_give_zero(self):
        model = mlp_init(3, seed=0)
        for p in model.params():
            p[:] = 0.0
        assert mlp_forward(model, np.ones(3)) == 0.0
        assert np.all(mlp_forward(model, np.ones((5, 3))) == 0.0)

    def test_hand_rolled_linear_path(self):
        # 1-64-64-1 carrying the input through unit weights on one channel
        model = mlp_init(1, seed=0)
        for p in model.params():
            p[:] = 0.0
        model.w1[0, 0] = 2.0
        model.b1[0] = 1.0
        model.w2[0, 0] = 3.0
        model.w3[0, 0] = 0.5
        model.b3[0] = -1.0
        # x=2: z1 = 5, z2 = 15, out = 0.5*15 - 1 = 6.5
        assert mlp_forward(model, np.array([2.0])) == pytest.approx(6.5)
        # negative rail is cut by the rectifier: z1 = -3 -> 0 -> out = -1
        assert mlp_forward(model, np.array([-2.0])) == pytest.approx(-1.0)

    def test_batch_equals_loop(self):
        model = mlp_init(4, seed=3)
        rng = np.random.default_rng(1)
        xs = rng.normal(size=(100, 4))
        batched = mlp_forward(model, xs)
        looped = np.array([mlp_forward(model, row) for row in xs])
        assert np.array_equal(batched, looped)

    def test_dim_mismatch(self):
        model = mlp_init(2, seed=0)
        with pytest.raises(ValueError):
            mlp_forward(model, np.ones(3))

    def test_param_count_formula(self):
        # 5*64+64 + 64*64+64 + 64*1+1
        assert param_count(mlp_init(5, seed=0)) == 4609


class TestBackward:
    def test_zero_upstream(self):
        model = mlp_init(3, seed=5)
        g = backward(model, np.zeros(4), np.ones((4, 3)))
        for p in g.params():
            assert np.all(p == 0.0)

    def test_linearity(self):
        model = mlp_init(2, seed=9)
        rng = np.random.default_rng(0)
        x = rng.normal(size=(6, 2))
        g1, g2 = rng.normal(size=6), rng.normal(size=6)
        combined = backward(model, g1 + g2, x)
        separate = backward(model, g1, x).add_(backward(model, g2, x))
        for a, b in zip(combined.params(), separate.params()):
            assert np.allclose(a, b, atol=1e-10)

    def test_matches_finite_differences(self):
        model = mlp_init(3, seed=11)
        rng = np.random.default_rng(2)
        x = rng.normal(size=(20, 3))
        up = rng.normal(size=20)
        analytic = backward(model, up, x)

        def weighted_sum(m):
            return float(np.dot(up, mlp_forward(m, x)))

        numeric = finite_diff_grads(model, weighted_sum)
        assert agreement_fraction(analytic, numeric) >= 0.95


class TestMseLoss:
    def test_perfect_prediction(self):
        loss, grad = mse_loss([1.0, 2.0], [1.0, 2.0])
        assert loss == 0.0
        assert np.all(grad == 0.0)

    def test_definitional(self):
        loss, grad = mse_loss([1.0], [0.0])
        assert loss == 1.0
        assert grad[0] == 2.0

    def test_empty_refused(self):
        with pytest.raises(ValueError):
            mse_loss([], [])

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        p = rng.normal(size=10)
        t = rng.normal(size=10)
        _, grad = mse_loss(p, t)
        step = 1e-6
        for i in range(10):
            dp = p.copy()
            dp[i] += step
            hi, _ = mse_loss(dp, t)
            dp[i] -= 2 * step
            lo, _ = mse_loss(dp, t)
            assert grad[i] == pytest.approx((hi - lo) / (2 * step), abs=1e-6)


class TestOptimizer:
    def test_zero_gradient_no_change(self):
        model = mlp_init(2, seed=1)
        before = [p.copy() for p in model.params()]
        optimizer_step(model, GradBuffer.zeros_like(model), optimizer_init(model))
        for p, b in zip(model.params(), before):
            assert np.array_equal(p, b)

    def test_scalar_quadratic_descends(self):
        # drive one bias toward a quadratic optimum at 3
        model = mlp_init(1, seed=2)
        for p in model.params():
            p[:] = 0.0
        state = optimizer_init(model, learning_rate=0.05)
        losses = []
        for _ in range(100):
            theta = model.b3[0]
            losses.append((theta - 3.0) ** 2)
            grads = GradBuffer.zeros_like(model)
            grads.b3[0] = 2 * (theta - 3.0)
            optimizer_step(model, grads, state)
        assert losses == sorted(losses, reverse=True)
        assert losses[-1] < losses[0] / 10

    def test_determinism(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(8, 2))
        up = rng.normal(size=8)
        runs = []
        for _ in range(2):
            model = mlp_init(2, seed=7)
            state = optimizer_init(model)
            for _ in range(5):
                optimizer_step(model, backward(model, up, x), state)
            runs.append([p.copy() for p in model.params()])
        for a, b in zip(*runs):
            assert np.array_equal(a, b)

    def test_refuses_nonfinite(self):
        model = mlp_init(2, seed=1)
        grads = GradBuffer.zeros_like(model)
        grads.w1[0, 0] = np.nan
        with pytest.raises(ValueError):
            optimizer_step(model, grads, optimizer_init(model))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = mlp_init(4, seed=13)
        path = tmp_path / "model.bin"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        rng = np.random.default_rng(0)
        x = rng.normal(size=(10, 4))
        assert np.array_equal(mlp_forward(model, x), mlp_forward(loaded, x))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(path)

    def test_truncation_detected(self, tmp_path):
        model = mlp_init(2, seed=3)
        path = tmp_path / "model.bin"
        save_checkpoint(model, path)
        data = path.read_bytes()
        path.write_bytes(data + b"\x00" * 8)
        with pytest.raises(ValueError, match="trailing"):
            load_checkpoint(path)
