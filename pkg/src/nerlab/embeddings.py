"""Static word vectors: skip-gram training with negative sampling.

Vocabulary keys are lowercased; words below the configured count threshold
share the UNK row, which doubles as the out-of-vocabulary fallback, so lookup
is total. Tables can be saved to and loaded from a binary container.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import container
from .corpus import tokenize

MAGIC = b"NLEMB\x00"
FORMAT_VERSION = 1

_BATCH = 512


class EmbeddingError(ValueError):
    pass


@dataclass(frozen=True)
class SkipGramConfig:
    dim: int = 64
    window: int = 2
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.05
    min_count: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1 or self.window < 1 or self.negatives < 1 or self.epochs < 1:
            raise EmbeddingError("dim, window, negatives, and epochs must all be >= 1")


class StaticEmbeddingTable:
    """word -> fixed vector, with a dedicated UNK row for everything else."""

    def __init__(self, vocab: dict[str, int], vectors: np.ndarray, normalized: bool = False):
        if vectors.ndim != 2 or vectors.shape[0] != len(vocab) + 1:
            raise EmbeddingError("vectors must have one row per vocab word plus UNK")
        if not np.all(np.isfinite(vectors)):
            raise EmbeddingError("vectors must be finite")
        self.vocab = dict(vocab)
        self.vectors = vectors.astype(np.float32, copy=False)
        self.normalized = normalized

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def unk_index(self) -> int:
        return self.vectors.shape[0] - 1

    def row(self, word: str) -> int:
        return self.vocab.get(word.lower(), self.unk_index)

    def lookup(self, word: str) -> np.ndarray:
        return self.vectors[self.row(word)]

    def rows(self, words: list[str]) -> np.ndarray:
        idx = np.fromiter((self.row(w) for w in words), dtype=np.int64, count=len(words))
        return self.vectors[idx]

    def unit(self) -> "StaticEmbeddingTable":
        """Copy with every row scaled to unit L2 norm (zero rows left alone)."""
        norms = np.linalg.norm(self.vectors, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        return StaticEmbeddingTable(self.vocab, (self.vectors / norms).astype(np.float32), True)

    def save(self, path: str | Path) -> None:
        words = sorted(self.vocab, key=self.vocab.get)
        config = {"words": words, "normalized": self.normalized, "dim": self.dim}
        container.write_container(path, MAGIC, FORMAT_VERSION, config, {"vectors": self.vectors})

    @staticmethod
    def load(path: str | Path) -> "StaticEmbeddingTable":
        config, arrays = container.read_container(path, MAGIC, FORMAT_VERSION)
        vocab = {w: i for i, w in enumerate(config["words"])}
        table = StaticEmbeddingTable(vocab, arrays["vectors"], config["normalized"])
        if table.dim != config["dim"]:
            raise container.ContainerError(f"{path}: dim header disagrees with vector shape")
        return table


def save_embeddings(table: StaticEmbeddingTable, path: str | Path) -> None:
    table.save(path)


def load_embeddings(path: str | Path) -> StaticEmbeddingTable:
    return StaticEmbeddingTable.load(path)


def corpus_words(sentences: list[str]) -> list[list[str]]:
    """Lowercased token texts per sentence; empty sentences dropped."""
    out = []
    for sentence in sentences:
        words = [t.text.lower() for t in tokenize(sentence)]
        if words:
            out.append(words)
    return out


def sgns_loss_and_grads(
    center: np.ndarray, positive: np.ndarray, negatives: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Negative-sampling loss for one (center, context, k negatives) example.

    center, positive: (dim,); negatives: (k, dim). Returns
    (loss, d_center, d_positive, d_negatives). The loss is
    -log s(c.p) - sum_k log s(-c.n_k).
    """
    from .nn import log_sigmoid, sigmoid

    pos_dot = center @ positive
    neg_dot = negatives @ center
    loss = float(-log_sigmoid(np.asarray(pos_dot)) - log_sigmoid(-neg_dot).sum())
    g_pos = sigmoid(np.asarray(pos_dot)) - 1.0
    g_neg = sigmoid(neg_dot)
    d_center = g_pos * positive + g_neg @ negatives
    d_positive = g_pos * center
    d_negatives = np.outer(g_neg, center)
    return loss, d_center, d_positive, d_negatives


def train_static_embeddings(
    corpus: list[str], config: SkipGramConfig
) -> StaticEmbeddingTable:
    """Train skip-gram-with-negative-sampling vectors on raw sentences.

    Single-threaded and deterministic for a fixed config. Words rarer than
    `min_count` train the UNK row instead of getting their own.
    """
    sentences = corpus_words(corpus)
    if not sentences:
        raise EmbeddingError("corpus has no non-empty sentences")

    freq: dict[str, int] = {}
    for words in sentences:
        for w in words:
            freq[w] = freq.get(w, 0) + 1
    vocab = {w: i for i, w in enumerate(sorted(w for w, c in freq.items() if c >= config.min_count))}
    unk = len(vocab)

    rng = np.random.default_rng(config.seed)
    w_in = ((rng.random((unk + 1, config.dim)) - 0.5) / config.dim).astype(np.float32)
    w_out = np.zeros((unk + 1, config.dim), dtype=np.float32)

    # unigram^0.75 noise distribution over rows (UNK pools the rare words)
    noise_counts = np.zeros(unk + 1)
    for w, c in freq.items():
        noise_counts[vocab.get(w, unk)] += c
    noise = noise_counts**0.75
    noise_cdf = np.cumsum(noise / noise.sum())

    centers: list[int] = []
    contexts: list[int] = []
    for words in sentences:
        ids = [vocab.get(w, unk) for w in words]
        for i, c in enumerate(ids):
            lo = max(0, i - config.window)
            hi = min(len(ids), i + config.window + 1)
            for j in range(lo, hi):
                if j != i:
                    centers.append(c)
                    contexts.append(ids[j])
    if not centers:
        # single-word corpus: pair each word with itself so training still runs
        centers = [vocab.get(w, unk) for words in sentences for w in words]
        contexts = list(centers)
    center_arr = np.asarray(centers, dtype=np.int64)
    context_arr = np.asarray(contexts, dtype=np.int64)

    from .nn import sigmoid

    lr = np.float32(config.learning_rate)
    rows = unk + 1
    for _ in range(config.epochs):
        order = rng.permutation(center_arr.size)
        for lo in range(0, order.size, _BATCH):
            sel = order[lo : lo + _BATCH]
            c_idx = center_arr[sel]
            p_idx = context_arr[sel]
            n_idx = np.searchsorted(noise_cdf, rng.random((sel.size, config.negatives)))

            v_c = w_in[c_idx]
            u_p = w_out[p_idx]
            u_n = w_out[n_idx]

            g_pos = (sigmoid(np.einsum("bd,bd->b", v_c, u_p)) - 1.0).astype(np.float32)
            g_neg = sigmoid(np.einsum("bkd,bd->bk", u_n, v_c)).astype(np.float32)

            d_c = g_pos[:, None] * u_p + np.einsum("bk,bkd->bd", g_neg, u_n)
            d_p = g_pos[:, None] * v_c
            d_n = g_neg[:, :, None] * v_c[:, None, :]

            # Average duplicate-row gradients instead of summing them: frequent
            # words can dominate a batch, and a summed step of lr * count
            # diverges where sequential updates would have saturated.
            flat_n = n_idx.reshape(-1)
            upd_in = np.zeros_like(w_in)
            np.add.at(upd_in, c_idx, d_c)
            cnt_in = np.bincount(c_idx, minlength=rows).astype(np.float32)
            w_in -= lr * upd_in / np.maximum(cnt_in, 1.0)[:, None]

            upd_out = np.zeros_like(w_out)
            np.add.at(upd_out, p_idx, d_p)
            np.add.at(upd_out, flat_n, d_n.reshape(-1, config.dim))
            cnt_out = (
                np.bincount(p_idx, minlength=rows) + np.bincount(flat_n, minlength=rows)
            ).astype(np.float32)
            w_out -= lr * upd_out / np.maximum(cnt_out, 1.0)[:, None]

    return StaticEmbeddingTable(vocab, w_in, normalized=False)


def seed_embedding_table(
    source: StaticEmbeddingTable,
    corpus: list[str],
    min_count: int = 1,
    seed: int = 0,
) -> StaticEmbeddingTable:
    """Build a table over `corpus` vocabulary, copying vectors from `source`
    where the word is known there and random-initializing the rest.

    This is how a pretraining run inherits a base model's vector space while
    still covering new domain vocabulary.
    """
    sentences = corpus_words(corpus)
    if not sentences:
        raise EmbeddingError("corpus has no non-empty sentences")
    freq: dict[str, int] = {}
    for words in sentences:
        for w in words:
            freq[w] = freq.get(w, 0) + 1
    vocab = {w: i for i, w in enumerate(sorted(w for w, c in freq.items() if c >= min_count))}
    rng = np.random.default_rng(seed)
    scale = float(np.abs(source.vectors).mean()) or 1.0 / source.dim
    vectors = rng.uniform(-scale, scale, size=(len(vocab) + 1, source.dim)).astype(np.float32)
    for word, row in vocab.items():
        if word in source.vocab:
            vectors[row] = source.vectors[source.vocab[word]]
    vectors[len(vocab)] = source.vectors[source.unk_index]
    return StaticEmbeddingTable(vocab, vectors, normalized=False)
