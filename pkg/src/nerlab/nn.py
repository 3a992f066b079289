"""Small numpy building blocks shared by the trainable models.

Everything here is dtype-generic: training runs in float32 for speed and
byte-stable serialization, while the finite-difference tests call the same
functions with float64 parameters.
"""

from __future__ import annotations

import numpy as np


def glorot(rng: np.random.Generator, fan_out: int, fan_in: int, dtype=np.float32) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in)).astype(dtype)


def uniform_rows(rng: np.random.Generator, rows: int, dim: int, scale: float, dtype=np.float32) -> np.ndarray:
    return rng.uniform(-scale, scale, size=(rows, dim)).astype(dtype)


def log_sigmoid(x: np.ndarray) -> np.ndarray:
    # -softplus(-x), stable for large |x|
    return np.where(x >= 0, -np.log1p(np.exp(-x)), x - np.log1p(np.exp(x)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def masked_softmax_cross_entropy(
    scores: np.ndarray, legal: np.ndarray, gold: np.ndarray
) -> tuple[float, np.ndarray]:
    """Cross-entropy over the legal actions only.

    scores: (n, A) raw scores; legal: (n, A) boolean mask; gold: (n,) indices.
    Returns (summed loss, dscores). Illegal actions get zero probability and
    zero gradient, matching a -inf mask at decode time.
    """
    neg = np.finfo(scores.dtype).min / 4
    masked = np.where(legal, scores, neg)
    maxes = masked.max(axis=1, keepdims=True)
    exp = np.exp(masked - maxes) * legal
    z = exp.sum(axis=1, keepdims=True)
    probs = exp / z
    n = scores.shape[0]
    gold_p = probs[np.arange(n), gold]
    loss = float(-np.log(np.maximum(gold_p, np.finfo(scores.dtype).tiny)).sum())
    dscores = probs.copy()
    dscores[np.arange(n), gold] -= 1.0
    return loss, dscores


def dropout_mask(rng: np.random.Generator, shape: tuple[int, ...], rate: float, dtype) -> np.ndarray:
    """Inverted-dropout multiplier; identity when rate == 0."""
    if rate <= 0.0:
        return np.ones(shape, dtype=dtype)
    keep = (rng.random(shape) >= rate).astype(dtype)
    return keep / dtype(1.0 - rate)


class Adam:
    """Plain Adam over a dict of named parameter arrays, updated in place."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            p = self.params[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= (self.lr / b1t) * m / (np.sqrt(v / b2t) + self.eps)


def finite_difference(loss_fn, arrays: dict[str, np.ndarray], eps: float = 1e-5) -> dict[str, np.ndarray]:
    """Central-difference gradients of `loss_fn(arrays)` wrt every entry.

    Test-only oracle; arrays should be float64 for usable precision.
    """
    grads = {}
    for name, arr in arrays.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss_fn(arrays)
            flat[i] = orig - eps
            lo = loss_fn(arrays)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads[name] = g
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
