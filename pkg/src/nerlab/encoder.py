"""Contextual token encoder and its language-model pretraining objective.

The encoder is a stack of fixed-window convolutions with residual connections
over static-vector inputs. Pretraining hides one or more focus tokens per
sentence behind a learned mask embedding and trains the network to output the
hidden token's static seed vector, scored by cosine distance (or squared
error). Because the target space *is* the static vector space, a pretrained
encoder can replace a static lookup under an already-trained downstream scorer.

All forward/backward math lives in dtype-generic free functions so the
finite-difference tests can run them in float64 while training stays float32.
"""

from __future__ import annotations

import string
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import container
from .corpus import Token, tokenize
from .embeddings import StaticEmbeddingTable
from .nn import Adam, dropout_mask, glorot

MAGIC = b"NLENC\x00"
FORMAT_VERSION = 1

N_SHAPE_FEATURES = 3
_PUNCT = frozenset(string.punctuation)


class EncoderError(ValueError):
    pass


def shape_features(text: str) -> list[float]:
    """(is-capitalized, has-digit, is-punct): surface cues the lowercased
    vector table cannot carry."""
    return [
        1.0 if text[:1].isupper() else 0.0,
        1.0 if any(c.isdigit() for c in text) else 0.0,
        1.0 if bool(text) and all(c in _PUNCT for c in text) else 0.0,
    ]


@dataclass(frozen=True)
class EncoderConfig:
    dim: int
    depth: int = 4
    window: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1 or self.depth < 1 or self.window < 1:
            raise EncoderError("dim, depth, and window must all be >= 1")


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 100
    patience: int = 10
    dropout: float = 0.1
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    loss: str = "cosine"
    mask_rate: float = 0.25
    depth: int = 4
    window: int = 1

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise EncoderError("epochs must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise EncoderError("dropout must be in [0,1)")
        if self.loss not in ("cosine", "l2"):
            raise EncoderError(f"unknown loss kind {self.loss!r}")
        if not 0.0 < self.mask_rate <= 1.0:
            raise EncoderError("mask_rate must be in (0,1]")


@dataclass(frozen=True)
class PretrainReport:
    epoch_losses: tuple[float, ...]
    stopped_epoch: int
    seconds: float


def init_params(config: EncoderConfig, dtype=np.float32) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(config.seed)
    feat = config.dim + N_SHAPE_FEATURES
    k = 2 * config.window + 1
    params: dict[str, np.ndarray] = {
        "w_in": glorot(rng, config.dim, feat, dtype),
        "b_in": np.zeros(config.dim, dtype=dtype),
        "w_out": glorot(rng, config.dim, config.dim, dtype),
        "b_out": np.zeros(config.dim, dtype=dtype),
        "mask": rng.uniform(-0.1, 0.1, size=feat).astype(dtype),
    }
    for layer in range(config.depth):
        params[f"w_c{layer}"] = glorot(rng, config.dim, k * config.dim, dtype)
        params[f"b_c{layer}"] = np.zeros(config.dim, dtype=dtype)
    return params


def _shifted(h: np.ndarray, offset: int) -> np.ndarray:
    """Neighbor view: row i holds h[:, i+offset, :], zero outside the batch."""
    if offset == 0:
        return h
    out = np.zeros_like(h)
    t = h.shape[1]
    if offset > 0:
        out[:, : t - offset] = h[:, offset:]
    else:
        out[:, -offset:] = h[:, : t + offset]
    return out


def forward(
    params: dict[str, np.ndarray],
    x: np.ndarray,
    lengths: np.ndarray,
    depth: int,
    window: int,
    drop: np.ndarray | None = None,
):
    """Run the conv stack on padded inputs x (batch, maxlen, dim+3).

    Padded positions are re-zeroed after every layer, so a batched forward is
    identical to encoding each sentence alone with zero boundary padding.
    Returns (y, cache) with y (batch, maxlen, dim).
    """
    b, t, _ = x.shape
    m = (np.arange(t)[None, :] < lengths[:, None]).astype(x.dtype)[:, :, None]
    h = (x @ params["w_in"].T + params["b_in"]) * m
    if drop is not None:
        h = h * drop
    hs = [h]
    zs, cs = [], []
    offsets = range(-window, window + 1)
    for layer in range(depth):
        z = np.concatenate([_shifted(h, o) for o in offsets], axis=2)
        c = np.tanh(z @ params[f"w_c{layer}"].T + params[f"b_c{layer}"])
        h = (h + c) * m
        zs.append(z)
        cs.append(c)
        hs.append(h)
    y = h @ params["w_out"].T + params["b_out"]
    cache = (x, m, hs, zs, cs, drop, depth, window)
    return y, cache


def backward(params: dict[str, np.ndarray], cache, dy: np.ndarray):
    """Gradients for every parameter plus the input features."""
    x, m, hs, zs, cs, drop, depth, window = cache
    dim = params["b_out"].shape[0]
    grads = {
        "w_out": np.einsum("btd,bte->de", dy, hs[-1]),
        "b_out": dy.sum(axis=(0, 1)),
    }
    dh = dy @ params["w_out"]
    offsets = list(range(-window, window + 1))
    for layer in reversed(range(depth)):
        dhc = dh * m
        c = cs[layer]
        dcpre = dhc * (1.0 - c * c)
        grads[f"w_c{layer}"] = np.einsum("btd,bte->de", dcpre, zs[layer])
        grads[f"b_c{layer}"] = dcpre.sum(axis=(0, 1))
        dz = dcpre @ params[f"w_c{layer}"]
        dh = dhc.copy()
        for k, o in enumerate(offsets):
            dh += _shifted(dz[:, :, k * dim : (k + 1) * dim], -o)
    dh = dh * m
    if drop is not None:
        dh = dh * drop
    grads["w_in"] = np.einsum("btd,btf->df", dh, x)
    grads["b_in"] = dh.sum(axis=(0, 1))
    dx = dh @ params["w_in"]
    return grads, dx


def cosine_loss(y: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row loss 1 - cos(y, target) for unit targets; bounded in [0, 2]."""
    norm = np.maximum(np.linalg.norm(y, axis=1, keepdims=True), 1e-8)
    dot = (y * target).sum(axis=1, keepdims=True)
    losses = 1.0 - dot / norm
    dy = -target / norm + (dot / norm**3) * y
    return losses[:, 0], dy


def l2_loss(y: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    diff = y - target
    return 0.5 * (diff * diff).sum(axis=1), diff


def masked_objective(
    params: dict[str, np.ndarray],
    base: np.ndarray,
    lengths: np.ndarray,
    focus: np.ndarray,
    targets: np.ndarray,
    depth: int,
    window: int,
    loss_kind: str,
    drop: np.ndarray | None = None,
):
    """Loss and gradients for one padded batch of cloze predictions.

    base: (b, t, dim+3) static features; focus: (b, t) bool marking hidden
    positions (their inputs are replaced by the mask embedding); targets:
    (b, t, dim) unit seed vectors. Returns (summed loss, n_focus, grads).
    """
    x = base.copy()
    x[focus] = params["mask"]
    y, cache = forward(params, x, lengths, depth, window, drop)
    y_f = y[focus]
    t_f = targets[focus]
    loss_fn = cosine_loss if loss_kind == "cosine" else l2_loss
    losses, dy_f = loss_fn(y_f, t_f)
    dy = np.zeros_like(y)
    dy[focus] = dy_f
    grads, dx = backward(params, cache, dy)
    grads["mask"] = dx[focus].sum(axis=0)
    return float(losses.sum()), int(focus.sum()), grads


def masked_objective_value(
    params, base, lengths, focus, targets, depth, window, loss_kind
) -> float:
    """Forward-only objective, used by the finite-difference oracle."""
    x = base.copy()
    x[focus] = params["mask"]
    y, _ = forward(params, x, lengths, depth, window)
    loss_fn = cosine_loss if loss_kind == "cosine" else l2_loss
    losses, _ = loss_fn(y[focus], targets[focus])
    return float(losses.sum())


class ContextualEncoder:
    """Trained conv encoder: maps token sequences to context-dependent
    vectors in the static seed space."""

    def __init__(self, config: EncoderConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params

    def encode(self, seeds: StaticEmbeddingTable, tokens: Sequence[Token]) -> np.ndarray:
        """One vector per token, (len(tokens), dim). Deterministic; a token's
        vector depends only on tokens within depth*window positions."""
        if seeds.dim != self.config.dim:
            raise EncoderError(f"seed table dim {seeds.dim} != encoder dim {self.config.dim}")
        if not tokens:
            return np.zeros((0, self.config.dim), dtype=np.float32)
        base = base_features(seeds, tokens)[None, :, :]
        y, _ = forward(self.params, base, np.array([len(tokens)]),
                       self.config.depth, self.config.window)
        return y[0].astype(np.float32)

    def config_dict(self) -> dict:
        return {"dim": self.config.dim, "depth": self.config.depth,
                "window": self.config.window, "seed": self.config.seed}

    @staticmethod
    def from_parts(config: dict, params: dict[str, np.ndarray]) -> "ContextualEncoder":
        return ContextualEncoder(EncoderConfig(**config), params)

    def save(self, path: str | Path) -> None:
        container.write_container(path, MAGIC, FORMAT_VERSION, self.config_dict(), self.params)

    @staticmethod
    def load(path: str | Path) -> "ContextualEncoder":
        config, params = container.read_container(path, MAGIC, FORMAT_VERSION)
        return ContextualEncoder.from_parts(config, params)


def save_encoder(encoder: ContextualEncoder, path: str | Path) -> None:
    encoder.save(path)


def load_encoder(path: str | Path) -> ContextualEncoder:
    return ContextualEncoder.load(path)


def base_features(seeds: StaticEmbeddingTable, tokens: Sequence[Token]) -> np.ndarray:
    """Static unit vector plus shape features per token, (n, dim+3)."""
    unit = seeds if seeds.normalized else seeds.unit()
    core = unit.rows([t.text for t in tokens])
    feats = np.asarray([shape_features(t.text) for t in tokens], dtype=np.float32)
    return np.concatenate([core, feats], axis=1)


def encode(
    encoder: ContextualEncoder, seeds: StaticEmbeddingTable, tokens: Sequence[Token]
) -> np.ndarray:
    return encoder.encode(seeds, tokens)


def pretrain_contextual(
    corpus: list[str], seeds: StaticEmbeddingTable, config: PretrainConfig
) -> tuple[ContextualEncoder, PretrainReport]:
    """Train an encoder to reconstruct hidden tokens' seed vectors from context.

    Each epoch re-samples the hidden positions per sentence (at least one).
    Training stops at config.epochs, or earlier once the epoch-mean loss has
    not improved for `patience` consecutive epochs.
    """
    started = time.perf_counter()
    unit = seeds if seeds.normalized else seeds.unit()
    sentences = [tokenize(line) for line in corpus]
    sentences = [s for s in sentences if s]
    if not sentences:
        raise EncoderError("pretraining corpus has no non-empty sentences")

    bases = [base_features(unit, toks) for toks in sentences]
    targets = [unit.rows([t.text for t in toks]) for toks in sentences]

    enc_config = EncoderConfig(dim=seeds.dim, depth=config.depth,
                               window=config.window, seed=config.seed)
    params = init_params(enc_config)
    rng = np.random.default_rng(config.seed)
    optim = Adam(params, lr=config.learning_rate)

    losses: list[float] = []
    best = np.inf
    stall = 0
    for _ in range(config.epochs):
        order = rng.permutation(len(sentences))
        total, count = 0.0, 0
        for lo in range(0, len(sentences), config.batch_size):
            idx = order[lo : lo + config.batch_size]
            lens = np.array([bases[i].shape[0] for i in idx])
            t_max = int(lens.max())
            b = len(idx)
            base = np.zeros((b, t_max, bases[0].shape[1]), dtype=np.float32)
            tgt = np.zeros((b, t_max, seeds.dim), dtype=np.float32)
            focus = np.zeros((b, t_max), dtype=bool)
            for row, i in enumerate(idx):
                n = lens[row]
                base[row, :n] = bases[i]
                tgt[row, :n] = targets[i]
                k = max(1, int(round(config.mask_rate * n)))
                focus[row, rng.choice(n, size=min(k, n), replace=False)] = True
            drop = None
            if config.dropout > 0.0:
                drop = dropout_mask(rng, (b, t_max, seeds.dim), config.dropout, np.float32)
            loss, n_focus, grads = masked_objective(
                params, base, lens, focus, tgt,
                config.depth, config.window, config.loss, drop,
            )
            for g in grads.values():
                g /= max(n_focus, 1)
            optim.step(grads)
            total += loss
            count += n_focus
        mean = total / max(count, 1)
        losses.append(mean)
        if mean < best - 1e-4:
            best = mean
            stall = 0
        else:
            stall += 1
            if stall >= config.patience:
                break

    encoder = ContextualEncoder(enc_config, params)
    report = PretrainReport(tuple(losses), len(losses), time.perf_counter() - started)
    return encoder, report
