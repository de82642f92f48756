"""Softmax classifiers with hand-derived gradients.

Two architectures, both expressed as a chain of affine layers identified by
the shape list on the parameter vector:

  [features, classes]                  multinomial logistic regression
  [features, hidden, hidden, classes]  3-layer ReLU network

Parameters live in one flat float64 vector (per layer: weight matrix in
row-major order, then bias). Loss is mean softmax cross-entropy with
max-subtraction, so it is finite for all finite inputs. Gradients are exact
analytic backprop; no autodiff anywhere.

Per-example gradient clipping is what makes the DP analysis hold: the bound
on a single example's gradient norm must apply before the minibatch mean is
taken, so ``clipped_gradient`` clips each example's gradient to norm G and
then averages.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "ModelParams",
    "Example",
    "param_count",
    "init_params",
    "loss",
    "gradient",
    "loss_and_gradient",
    "per_example_gradients",
    "clip",
    "clipped_gradient",
    "accuracy",
    "predict_logits",
    "predict_proba",
]


@dataclass(frozen=True)
class Example:
    features: np.ndarray
    label: int


@dataclass(frozen=True)
class ModelParams:
    """Flat parameter vector plus the layer-size list that interprets it."""

    values: np.ndarray
    shape: tuple[int, ...]

    def __post_init__(self):
        if len(self.shape) < 2 or any(s < 1 for s in self.shape):
            raise ValueError(f"invalid shape {self.shape}")
        expected = param_count(self.shape)
        if self.values.shape != (expected,):
            raise ValueError(
                f"parameter vector has length {self.values.shape}, "
                f"shape {self.shape} needs ({expected},)"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("parameters must be finite")

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def param_count(shape: Sequence[int]) -> int:
    return sum((fan_in + 1) * fan_out for fan_in, fan_out in zip(shape[:-1], shape[1:]))


def init_params(shape: Sequence[int], rng: np.random.Generator | None = None) -> ModelParams:
    """Zeros for the logistic model; He-normal weights (zero biases) for ReLU nets."""
    shape = tuple(shape)
    values = np.zeros(param_count(shape))
    if len(shape) > 2:
        if rng is None:
            raise ValueError("ReLU nets need an rng for He initialization")
        offset = 0
        for fan_in, fan_out in zip(shape[:-1], shape[1:]):
            w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
            values[offset : offset + fan_in * fan_out] = w.ravel()
            offset += (fan_in + 1) * fan_out
    return ModelParams(values, shape)


def _unpack(theta: ModelParams) -> list[tuple[np.ndarray, np.ndarray]]:
    layers = []
    offset = 0
    for fan_in, fan_out in zip(theta.shape[:-1], theta.shape[1:]):
        w = theta.values[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = theta.values[offset : offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def _as_arrays(batch, feature_dim: int) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(batch, tuple) and len(batch) == 2:
        x, y = batch
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
    else:
        if len(batch) == 0:
            raise ValueError("batch must be nonempty")
        x = np.stack([np.asarray(ex.features, dtype=np.float64) for ex in batch])
        y = np.array([ex.label for ex in batch], dtype=np.int64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("batch must be a nonempty 2-d design matrix")
    if x.shape[1] != feature_dim:
        raise ValueError(
            f"feature dimension mismatch: model expects {feature_dim}, got {x.shape[1]}"
        )
    return x, y


def _forward(theta: ModelParams, x: np.ndarray):
    """Activations and pre-activations of every layer; last entry is logits."""
    layers = _unpack(theta)
    activations = [x]
    pre = []
    a = x
    for idx, (w, b) in enumerate(layers):
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0) if idx < len(layers) - 1 else z
        activations.append(a)
    return layers, activations, pre


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def predict_logits(theta: ModelParams, x: np.ndarray) -> np.ndarray:
    _, activations, _ = _forward(theta, np.asarray(x, dtype=np.float64))
    return activations[-1]


def predict_proba(theta: ModelParams, x: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(predict_logits(theta, x)))


def loss(theta: ModelParams, batch) -> float:
    """Mean softmax cross-entropy over the batch."""
    x, y = _as_arrays(batch, theta.shape[0])
    log_probs = _log_softmax(predict_logits(theta, x))
    return float(-log_probs[np.arange(len(y)), y].mean())


def _backward_deltas(theta: ModelParams, x: np.ndarray, y: np.ndarray):
    """Per-example error signals delta[l] at every layer (no 1/n factor)."""
    layers, activations, pre = _forward(theta, x)
    log_probs = _log_softmax(activations[-1])
    delta = np.exp(log_probs)
    delta[np.arange(len(y)), y] -= 1.0
    deltas = [delta]
    for idx in range(len(layers) - 1, 0, -1):
        w, _ = layers[idx]
        delta = (delta @ w.T) * (pre[idx - 1] > 0)
        deltas.append(delta)
    deltas.reverse()
    return layers, activations, deltas, log_probs


def _mean_gradient(theta: ModelParams, layers, activations, deltas, n: int) -> np.ndarray:
    grad = np.empty_like(theta.values)
    offset = 0
    for (w, _), a_prev, delta in zip(layers, activations[:-1], deltas):
        gw = a_prev.T @ delta / n
        grad[offset : offset + w.size] = gw.ravel()
        offset += w.size
        grad[offset : offset + delta.shape[1]] = delta.mean(axis=0)
        offset += delta.shape[1]
    return grad


def gradient(theta: ModelParams, batch) -> np.ndarray:
    """Exact gradient of ``loss``, mean over the batch."""
    x, y = _as_arrays(batch, theta.shape[0])
    layers, activations, deltas, _ = _backward_deltas(theta, x, y)
    return _mean_gradient(theta, layers, activations, deltas, x.shape[0])


def loss_and_gradient(theta: ModelParams, batch) -> tuple[float, np.ndarray]:
    """Loss and its gradient in one forward/backward pass."""
    x, y = _as_arrays(batch, theta.shape[0])
    layers, activations, deltas, log_probs = _backward_deltas(theta, x, y)
    value = float(-log_probs[np.arange(len(y)), y].mean())
    return value, _mean_gradient(theta, layers, activations, deltas, x.shape[0])


def per_example_gradients(theta: ModelParams, batch) -> np.ndarray:
    """(n, d) matrix of single-example loss gradients."""
    x, y = _as_arrays(batch, theta.shape[0])
    layers, activations, deltas, _ = _backward_deltas(theta, x, y)
    n = x.shape[0]
    grads = np.empty((n, theta.dim))
    offset = 0
    for (w, _), a_prev, delta in zip(layers, activations[:-1], deltas):
        gw = np.einsum("bi,bo->bio", a_prev, delta)
        grads[:, offset : offset + w.size] = gw.reshape(n, -1)
        offset += w.size
        grads[:, offset : offset + delta.shape[1]] = delta
        offset += delta.shape[1]
    return grads


def clip(g: np.ndarray, clip_norm: float) -> np.ndarray:
    """Scale g to L2 norm at most ``clip_norm``, preserving direction."""
    if clip_norm <= 0:
        raise ValueError("clip_norm must be > 0")
    norm = float(np.linalg.norm(g))
    if norm <= clip_norm:
        return np.array(g, copy=True)
    return np.asarray(g) * (clip_norm / norm)


def clipped_gradient(theta: ModelParams, batch, clip_norm: float) -> np.ndarray:
    """Mean of per-example gradients, each clipped to norm ``clip_norm``.

    Avoids materializing per-example gradients: the norm of an example's
    gradient factorizes layer-wise as (|a_prev|^2 + 1) * |delta|^2, so the
    clip scales fold into the final matmuls.
    """
    if clip_norm <= 0:
        raise ValueError("clip_norm must be > 0")
    x, y = _as_arrays(batch, theta.shape[0])
    layers, activations, deltas, _ = _backward_deltas(theta, x, y)
    n = x.shape[0]
    norms_sq = np.zeros(n)
    for a_prev, delta in zip(activations[:-1], deltas):
        norms_sq += ((a_prev**2).sum(axis=1) + 1.0) * (delta**2).sum(axis=1)
    norms = np.sqrt(norms_sq)
    scales = np.ones(n)
    over = norms > clip_norm
    scales[over] = clip_norm / norms[over]
    grad = np.empty_like(theta.values)
    offset = 0
    for (w, _), a_prev, delta in zip(layers, activations[:-1], deltas):
        scaled = delta * scales[:, None]
        grad[offset : offset + w.size] = (a_prev.T @ scaled / n).ravel()
        offset += w.size
        grad[offset : offset + delta.shape[1]] = scaled.mean(axis=0)
        offset += delta.shape[1]
    return grad


def accuracy(theta: ModelParams, examples) -> float:
    """Fraction classified correctly; argmax ties go to the lower class index."""
    x, y = _as_arrays(examples, theta.shape[0])
    predicted = np.argmax(predict_logits(theta, x), axis=1)
    return float((predicted == y).mean())
