"""Fixed-architecture (d, 64, 64, 1) multilayer perceptron for regression.

Rectifier hidden layers, identity output, hand-written reverse-mode
gradients, and an adaptive-moment first-order optimizer.  Everything runs in
float64 on the CPU; forward evaluation on a frozen model is pure and
thread-safe, parameters are mutated only by :func:`optimizer_step`.

Checkpoints are flat binary files: the 8-byte magic ``WRCPMLP1``, the layer
dimensions, an activation tag, then the parameter tensors row-major (see
README for the exact field order).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "HIDDEN_WIDTH",
    "MlpModel",
    "GradBuffer",
    "OptimizerState",
    "mlp_init",
    "mlp_forward",
    "backward",
    "mse_loss",
    "optimizer_init",
    "optimizer_step",
    "param_count",
    "save_checkpoint",
    "load_checkpoint",
]

HIDDEN_WIDTH = 64
CHECKPOINT_MAGIC = b"WRCPMLP1"
_ACTIVATION_TAG = b"relu\x00\x00\x00\x00"


@dataclass(eq=False)
class MlpModel:
    """Weights and biases of the (d, 64, 64, 1) network."""

    w1: np.ndarray  # (64, d)
    b1: np.ndarray  # (64,)
    w2: np.ndarray  # (64, 64)
    b2: np.ndarray  # (64,)
    w3: np.ndarray  # (1, 64)
    b3: np.ndarray  # (1,)

    @property
    def layer_dims(self) -> tuple[int, int, int, int]:
        return (self.w1.shape[1], HIDDEN_WIDTH, HIDDEN_WIDTH, 1)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    def params(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)

    def copy(self) -> "MlpModel":
        return MlpModel(*[p.copy() for p in self.params()])


@dataclass(eq=False)
class GradBuffer:
    """One gradient tensor per parameter tensor, shape-matched."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    @classmethod
    def zeros_like(cls, model: MlpModel) -> "GradBuffer":
        return cls(*[np.zeros_like(p) for p in model.params()])

    def params(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)

    def add_(self, other: "GradBuffer", scale: float = 1.0) -> "GradBuffer":
        for mine, theirs in zip(self.params(), other.params()):
            mine += scale * theirs
        return self

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())


def param_count(model: MlpModel) -> int:
    return sum(p.size for p in model.params())


def mlp_init(input_dim: int, seed: int) -> MlpModel:
    """Seeded uniform initialization in ±sqrt(6 / (fan_in + fan_out))."""
    if input_dim < 1:
        raise ValueError("input dimension must be >= 1")
    rng = np.random.default_rng(seed)

    def layer(fan_in, fan_out):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-lim, lim, size=(fan_out, fan_in))
        return w, np.zeros(fan_out)

    w1, b1 = layer(input_dim, HIDDEN_WIDTH)
    w2, b2 = layer(HIDDEN_WIDTH, HIDDEN_WIDTH)
    w3, b3 = layer(HIDDEN_WIDTH, 1)
    model = MlpModel(w1, b1, w2, b2, w3, b3)
    d = input_dim
    expected = (d * HIDDEN_WIDTH + HIDDEN_WIDTH
                + HIDDEN_WIDTH * HIDDEN_WIDTH + HIDDEN_WIDTH
                + HIDDEN_WIDTH * 1 + 1)
    assert param_count(model) == expected
    return model


def _as_batch(model: MlpModel, x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != model.input_dim:
        raise ValueError(
            f"inputs of shape {np.asarray(x).shape} do not match input dim "
            f"{model.input_dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("inputs must be finite")
    return arr, single


def _affine(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """x @ w.T + b with a fixed per-row accumulation order.

    BLAS matmul reduction order varies with batch size, which would break the
    contract that batched outputs equal per-row outputs bit-for-bit.
    """
    # einsum (optimize=False) reduces over k in a fixed order per element and
    # never dispatches to shape-dependent BLAS kernels
    return np.einsum("nk,jk->nj", x, w) + b


def _forward_cached(model: MlpModel, x: np.ndarray):
    z1 = _affine(x, model.w1, model.b1)
    a1 = np.maximum(z1, 0.0)
    z2 = _affine(a1, model.w2, model.b2)
    a2 = np.maximum(z2, 0.0)
    out = _affine(a2, model.w3, model.b3).ravel()
    return out, (z1, a1, z2, a2)


def mlp_forward(model: MlpModel, x):
    """Predictions for a single d-vector (scalar) or an n x d batch (n,)."""
    batch, single = _as_batch(model, x)
    out, _ = _forward_cached(model, batch)
    return float(out[0]) if single else out


def backward(model: MlpModel, grad_outputs, inputs) -> GradBuffer:
    """Exact gradients of Σ_j g_j · h(x_j) with respect to every parameter.

    The forward intermediates are recomputed from ``inputs``; the rectifier
    subgradient at 0 is 0.
    """
    x, _ = _as_batch(model, inputs)
    g = np.asarray(grad_outputs, dtype=np.float64).ravel()
    if g.size != x.shape[0]:
        raise ValueError(f"{g.size} output gradients for {x.shape[0]} inputs")
    _, (z1, a1, z2, a2) = _forward_cached(model, x)
    dout = g[:, None]
    gw3 = dout.T @ a2
    gb3 = dout.sum(axis=0)
    da2 = dout @ model.w3
    dz2 = da2 * (z2 > 0)
    gw2 = dz2.T @ a1
    gb2 = dz2.sum(axis=0)
    da1 = dz2 @ model.w2
    dz1 = da1 * (z1 > 0)
    gw1 = dz1.T @ x
    gb1 = dz1.sum(axis=0)
    return GradBuffer(gw1, gb1, gw2, gb2, gw3, gb3)


def mse_loss(predictions, targets) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient with respect to the predictions."""
    p = np.asarray(predictions, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if p.size == 0 or p.size != t.size:
        raise ValueError("predictions and targets must be nonempty and equal length")
    resid = p - t
    loss = float(np.mean(resid**2))
    return loss, (2.0 / p.size) * resid


@dataclass(eq=False)
class OptimizerState:
    """Adaptive-moment accumulators plus the update hyperparameters."""

    m: GradBuffer
    v: GradBuffer
    step: int
    learning_rate: float
    beta1: float
    beta2: float
    eps: float


def optimizer_init(model: MlpModel, learning_rate: float = 1e-3,
                   beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> OptimizerState:
    if learning_rate <= 0:
        raise ValueError("learning rate must be positive")
    return OptimizerState(m=GradBuffer.zeros_like(model),
                          v=GradBuffer.zeros_like(model),
                          step=0, learning_rate=learning_rate,
                          beta1=beta1, beta2=beta2, eps=eps)


def optimizer_step(model: MlpModel, grads: GradBuffer,
                   state: OptimizerState) -> tuple[MlpModel, OptimizerState]:
    """One bias-corrected adaptive-moment update, in place."""
    if not grads.all_finite():
        raise ValueError("refusing update: non-finite gradient")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(model.params(), grads.params(),
                          state.m.params(), state.v.params()):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return model, state


# ---------------------------------------------------------------------------
# Checkpoint IO


def save_checkpoint(model: MlpModel, path) -> None:
    dims = model.layer_dims
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(dims)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        fh.write(_ACTIVATION_TAG)
        for p in model.params():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path) -> MlpModel:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint (bad magic)")
    off = 8
    (n_dims,) = struct.unpack_from("<I", raw, off)
    off += 4
    dims = struct.unpack_from(f"<{n_dims}I", raw, off)
    off += 4 * n_dims
    if len(dims) != 4 or dims[1] != HIDDEN_WIDTH or dims[2] != HIDDEN_WIDTH or dims[3] != 1:
        raise ValueError(f"{path}: unsupported layer dims {dims}")
    tag = raw[off:off + 8]
    off += 8
    if tag != _ACTIVATION_TAG:
        raise ValueError(f"{path}: unsupported activation tag {tag!r}")
    d = dims[0]
    shapes = [(HIDDEN_WIDTH, d), (HIDDEN_WIDTH,), (HIDDEN_WIDTH, HIDDEN_WIDTH),
              (HIDDEN_WIDTH,), (1, HIDDEN_WIDTH), (1,)]
    tensors = []
    for shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
        off += count * 8
        tensors.append(arr.reshape(shape).astype(np.float64))
    if off != len(raw):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return MlpModel(*tensors)
