"""Transition-constrained BILOU entity tagger.

Decoding walks left to right keeping one piece of state: the label of the
currently open span, if any. The legality rules below make every reachable
action sequence correspond to exactly one well-formed span set:

* nothing open: O, U-x for any label, or B-x unless this is the last token
  (a B there could never be closed);
* span with label x open: I-x or L-x, with I-x excluded at the last token.

The scorer is a one-hidden-layer network over the token representation
concatenated with an embedding of the previous action, so decisions are
genuinely transition-conditioned rather than per-token classification.
Token representations come from the model's static table, or from its
contextual encoder when one is attached; representation layers stay frozen
during tagger training, which keeps the three experiment arms distinct and
lets whole documents be encoded once up front.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import container
from .corpus import Dataset, Document, EntitySpan, Token, bilou_tags, spans_from_tags
from .embeddings import StaticEmbeddingTable
from .encoder import N_SHAPE_FEATURES, ContextualEncoder, shape_features
from .nn import Adam, dropout_mask, glorot, masked_softmax_cross_entropy, uniform_rows

MAGIC = b"NLNER\x00"
FORMAT_VERSION = 1


class TaggerError(ValueError):
    pass


class LabelScheme:
    """Ordered entity labels and their derived action inventory.

    Action 0 is O; label number i owns the contiguous block
    B=4i+1, I=4i+2, L=4i+3, U=4i+4. Extending the label list therefore
    preserves every existing action index.
    """

    def __init__(self, labels: Sequence[str]):
        labels = tuple(labels)
        if len(set(labels)) != len(labels):
            raise TaggerError(f"duplicate labels in {labels!r}")
        if any(not l for l in labels):
            raise TaggerError("labels must be non-empty strings")
        self.labels = labels
        self._label_index = {l: i for i, l in enumerate(labels)}
        names = ["O"]
        for label in labels:
            names += [f"B-{label}", f"I-{label}", f"L-{label}", f"U-{label}"]
        self.action_names = tuple(names)
        self._action_index = {n: i for i, n in enumerate(names)}

    O = 0

    @property
    def n_actions(self) -> int:
        return 4 * len(self.labels) + 1

    def action_index(self, name: str) -> int:
        try:
            return self._action_index[name]
        except KeyError:
            raise TaggerError(f"action {name!r} not in scheme {self.labels!r}") from None

    def begin(self, label_i: int) -> int:
        return 4 * label_i + 1

    def inside(self, label_i: int) -> int:
        return 4 * label_i + 2

    def last(self, label_i: int) -> int:
        return 4 * label_i + 3

    def unit(self, label_i: int) -> int:
        return 4 * label_i + 4

    def label_of(self, action: int) -> int | None:
        """Label number owning `action`, or None for O."""
        return None if action == self.O else (action - 1) // 4

    def extend(self, new_labels: Sequence[str]) -> "LabelScheme":
        overlap = set(new_labels) & set(self.labels)
        if overlap:
            raise TaggerError(f"labels {sorted(overlap)!r} already in scheme")
        return LabelScheme(self.labels + tuple(new_labels))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, LabelScheme) and self.labels == other.labels

    def __repr__(self) -> str:
        return f"LabelScheme({list(self.labels)!r})"


@dataclass(frozen=True)
class TransitionState:
    position: int = 0
    open_entity: int | None = None  # label number, not action


def valid_actions(
    state: TransitionState, scheme: LabelScheme, is_last_token: bool
) -> frozenset[int]:
    """The set of legal action indices in `state`. Never empty."""
    if state.open_entity is None:
        acts = {scheme.O}
        for i in range(len(scheme.labels)):
            acts.add(scheme.unit(i))
            if not is_last_token:
                acts.add(scheme.begin(i))
        return frozenset(acts)
    i = state.open_entity
    acts = {scheme.last(i)}
    if not is_last_token:
        acts.add(scheme.inside(i))
    return frozenset(acts)


def valid_action_mask(
    state: TransitionState, scheme: LabelScheme, is_last_token: bool
) -> np.ndarray:
    mask = np.zeros(scheme.n_actions, dtype=bool)
    for a in valid_actions(state, scheme, is_last_token):
        mask[a] = True
    return mask


def apply_action(state: TransitionState, action: int, scheme: LabelScheme) -> TransitionState:
    label = scheme.label_of(action)
    if state.open_entity is None:
        if label is not None and action == scheme.begin(label):
            return TransitionState(state.position + 1, label)
        if label is None or action == scheme.unit(label):
            return TransitionState(state.position + 1, None)
    else:
        if action == scheme.inside(state.open_entity):
            return TransitionState(state.position + 1, state.open_entity)
        if action == scheme.last(state.open_entity):
            return TransitionState(state.position + 1, None)
    raise TaggerError(
        f"action {scheme.action_names[action]!r} illegal in state {state!r}"
    )


def gold_actions(
    tokens: Sequence[Token], spans: Iterable[EntitySpan], scheme: LabelScheme, doc_id: str = "?"
) -> list[int]:
    """Oracle action sequence for a span layout (one action per token)."""
    doc = Document(doc_id, _text_of(tokens), tuple(tokens), tuple(sorted(spans)))
    return [scheme.action_index(tag) for tag in bilou_tags(doc)]


def _text_of(tokens: Sequence[Token]) -> str:
    if not tokens:
        return ""
    out = []
    pos = 0
    for tok in tokens:
        out.append(" " * (tok.start - pos))
        out.append(tok.text)
        pos = tok.end
    return "".join(out)


def actions_to_spans(
    scheme: LabelScheme, tokens: Sequence[Token], actions: Sequence[int]
) -> list[EntitySpan]:
    tags = [scheme.action_names[a] for a in actions]
    return spans_from_tags(tokens, tags)


def is_valid_sequence(scheme: LabelScheme, actions: Sequence[int]) -> bool:
    """Check a full action sequence against the transition grammar."""
    state = TransitionState()
    for i, action in enumerate(actions):
        if action not in valid_actions(state, scheme, i == len(actions) - 1):
            return False
        state = apply_action(state, action, scheme)
    return state.open_entity is None


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 64
    action_dim: int = 8
    seed: int = 0


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 100
    dropout: float = 0.2
    batch_size: int = 32
    learning_rate: float = 5e-3
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise TaggerError("iterations must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise TaggerError("dropout must be in [0,1)")


class NerModel:
    """Label scheme + token representation components + transition scorer.

    Scorer parameters:
        act_emb  (n_actions + 1, action_dim)   previous-action embedding,
                                               last row is begin-of-sentence
        w1, b1   hidden layer over [token repr ; prev-action embedding]
        w2, b2   output layer, one row per action
    """

    def __init__(
        self,
        scheme: LabelScheme,
        table: StaticEmbeddingTable,
        encoder: ContextualEncoder | None,
        params: dict[str, np.ndarray],
        config: ModelConfig,
    ):
        if encoder is not None and encoder.config.dim != table.dim:
            raise TaggerError(
                f"encoder dim {encoder.config.dim} != table dim {table.dim}"
            )
        if params["w2"].shape[0] != scheme.n_actions:
            raise TaggerError("scorer output width must equal the action count")
        self.scheme = scheme
        self.table = table
        self.encoder = encoder
        self.params = params
        self.config = config
        self._unit_table: StaticEmbeddingTable | None = None

    @property
    def repr_dim(self) -> int:
        return self.table.dim + N_SHAPE_FEATURES

    @property
    def bos_row(self) -> int:
        return self.params["act_emb"].shape[0] - 1

    def _unit(self) -> StaticEmbeddingTable:
        if self._unit_table is None:
            self._unit_table = self.table if self.table.normalized else self.table.unit()
        return self._unit_table

    def token_reprs(self, tokens: Sequence[Token]) -> np.ndarray:
        """(n, table.dim + 3) representation matrix; frozen during training."""
        if not tokens:
            return np.zeros((0, self.repr_dim), dtype=np.float32)
        if self.encoder is not None:
            core = self.encoder.encode(self._unit(), tokens)
        else:
            core = self._unit().rows([t.text for t in tokens])
        feats = np.asarray([shape_features(t.text) for t in tokens], dtype=np.float32)
        return np.concatenate([core.astype(np.float32), feats], axis=1)

    def with_encoder(self, encoder: ContextualEncoder) -> "NerModel":
        """Same scorer, contextual representations. Valid because pretraining
        drives encoder outputs toward the static vectors the scorer knows."""
        return NerModel(self.scheme, self.table, encoder,
                        copy.deepcopy(self.params), self.config)

    def copy(self) -> "NerModel":
        return NerModel(self.scheme, self.table, self.encoder,
                        copy.deepcopy(self.params), self.config)

    # -- scoring ------------------------------------------------------------

    def score_matrix(self, reprs: np.ndarray, prev_rows: np.ndarray) -> np.ndarray:
        """Raw action scores for aligned (repr, previous-action) pairs.

        The output layer is applied row by row: each action's score is an
        independent dot product, so scores survive a label-set extension
        bit-for-bit (a single gemm may re-block and shift rounding).
        """
        p = self.params
        x = np.concatenate([reprs, p["act_emb"][prev_rows]], axis=1)
        h = np.tanh(x @ p["w1"].T + p["b1"])
        scores = np.empty((h.shape[0], p["w2"].shape[0]), dtype=h.dtype)
        for action in range(p["w2"].shape[0]):
            scores[:, action] = h @ p["w2"][action] + p["b2"][action]
        return scores

    def decode(self, tokens: Sequence[Token]) -> list[EntitySpan]:
        if not tokens:
            return []
        p = self.params
        reprs = self.token_reprs(tokens)
        d = reprs.shape[1]
        w1_repr, w1_act = p["w1"][:, :d], p["w1"][:, d:]
        base = reprs @ w1_repr.T + p["b1"]  # hidden pre-activation, repr part
        state = TransitionState()
        prev = self.bos_row
        actions: list[int] = []
        n = len(tokens)
        for i in range(n):
            h = np.tanh(base[i] + w1_act @ p["act_emb"][prev])
            scores = p["w2"] @ h + p["b2"]
            mask = valid_action_mask(state, self.scheme, i == n - 1)
            scores[~mask] = -np.inf
            action = int(np.argmax(scores))
            actions.append(action)
            state = apply_action(state, action, self.scheme)
            prev = action
        return actions_to_spans(self.scheme, tokens, actions)

    # -- serialization -------------------------------------------------------

    def save(self, path: str | Path) -> None:
        config = {
            "labels": list(self.scheme.labels),
            "model": {"hidden": self.config.hidden,
                      "action_dim": self.config.action_dim,
                      "seed": self.config.seed},
            "table": {"words": sorted(self.table.vocab, key=self.table.vocab.get),
                      "normalized": self.table.normalized},
            "encoder": self.encoder.config_dict() if self.encoder else None,
        }
        arrays = {f"scorer/{k}": v for k, v in self.params.items()}
        arrays["table/vectors"] = self.table.vectors
        if self.encoder is not None:
            arrays.update({f"encoder/{k}": v for k, v in self.encoder.params.items()})
        container.write_container(path, MAGIC, FORMAT_VERSION, config, arrays)

    @staticmethod
    def load(path: str | Path) -> "NerModel":
        config, arrays = container.read_container(path, MAGIC, FORMAT_VERSION)
        scheme = LabelScheme(config["labels"])
        vocab = {w: i for i, w in enumerate(config["table"]["words"])}
        table = StaticEmbeddingTable(vocab, arrays["table/vectors"],
                                     config["table"]["normalized"])
        encoder = None
        if config["encoder"] is not None:
            encoder = ContextualEncoder.from_parts(
                config["encoder"],
                {k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("encoder/")},
            )
        params = {k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("scorer/")}
        mc = ModelConfig(**config["model"])
        return NerModel(scheme, table, encoder, params, mc)


def save_model(model: NerModel, path: str | Path) -> None:
    model.save(path)


def load_model(path: str | Path) -> NerModel:
    return NerModel.load(path)


def blank(
    scheme: LabelScheme,
    table: StaticEmbeddingTable,
    encoder: ContextualEncoder | None = None,
    config: ModelConfig = ModelConfig(),
) -> NerModel:
    """A freshly initialized model with no trained entities."""
    rng = np.random.default_rng(config.seed)
    repr_dim = table.dim + N_SHAPE_FEATURES
    in_dim = repr_dim + config.action_dim
    params = {
        "act_emb": uniform_rows(rng, scheme.n_actions + 1, config.action_dim, 0.1),
        "w1": glorot(rng, config.hidden, in_dim),
        "b1": np.zeros(config.hidden, dtype=np.float32),
        "w2": glorot(rng, scheme.n_actions, config.hidden),
        "b2": np.zeros(scheme.n_actions, dtype=np.float32),
    }
    return NerModel(scheme, table, encoder, params, config)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _doc_training_rows(model: NerModel, doc: Document):
    """Frozen per-document tensors: representations, gold actions, previous
    gold actions (teacher forcing), and per-step legality masks."""
    tokens = doc.tokens
    golds = gold_actions(tokens, doc.spans, model.scheme, doc.id)
    reprs = model.token_reprs(tokens)
    n = len(tokens)
    prev = np.empty(n, dtype=np.int64)
    masks = np.zeros((n, model.scheme.n_actions), dtype=bool)
    state = TransitionState()
    row = model.bos_row
    for i, action in enumerate(golds):
        prev[i] = row
        masks[i] = valid_action_mask(state, model.scheme, i == n - 1)
        state = apply_action(state, action, model.scheme)
        row = action
    return reprs, np.asarray(golds, dtype=np.int64), prev, masks


def scorer_loss_and_grads(
    params: dict[str, np.ndarray],
    reprs: np.ndarray,
    prev_rows: np.ndarray,
    legal: np.ndarray,
    golds: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean legality-masked cross-entropy and gradients for the scorer."""
    n = reprs.shape[0]
    act = params["act_emb"][prev_rows]
    x = np.concatenate([reprs, act], axis=1)
    h = np.tanh(x @ params["w1"].T + params["b1"])
    scores = h @ params["w2"].T + params["b2"]
    loss, dscores = masked_softmax_cross_entropy(scores, legal, golds)
    dscores /= n
    dw2 = dscores.T @ h
    db2 = dscores.sum(axis=0)
    dh = dscores @ params["w2"]
    dpre = dh * (1.0 - h * h)
    dw1 = dpre.T @ x
    db1 = dpre.sum(axis=0)
    dx = dpre @ params["w1"]
    dact = np.zeros_like(params["act_emb"])
    np.add.at(dact, prev_rows, dx[:, reprs.shape[1]:])
    grads = {"act_emb": dact, "w1": dw1, "b1": db1, "w2": dw2, "b2": db2}
    return loss / n, grads


def train(base: NerModel, train_data: Dataset, config: TrainConfig) -> NerModel:
    """Teacher-forced training pass; returns a new model, base untouched.

    Deterministic for a fixed seed: document order, dropout, and updates all
    draw from one seeded generator, and arithmetic stays in float32.
    """
    if len(train_data) == 0:
        raise TaggerError("training data is empty")
    for doc in train_data:
        for span in doc.spans:
            if span.label not in base.scheme.labels:
                raise TaggerError(
                    f"document {doc.id!r}: label {span.label!r} not in scheme "
                    f"{list(base.scheme.labels)!r}"
                )

    model = base.copy()
    rows = [
        _doc_training_rows(model, doc) for doc in train_data if len(doc.tokens) > 0
    ]
    if not rows:
        raise TaggerError("training data has no tokens")

    rng = np.random.default_rng(config.seed)
    optim = Adam(model.params, lr=config.learning_rate)
    order = np.arange(len(rows))
    for _ in range(config.iterations):
        if config.shuffle:
            order = rng.permutation(len(rows))
        for lo in range(0, len(rows), config.batch_size):
            batch = [rows[i] for i in order[lo : lo + config.batch_size]]
            reprs = np.concatenate([b[0] for b in batch])
            golds = np.concatenate([b[1] for b in batch])
            prev = np.concatenate([b[2] for b in batch])
            legal = np.concatenate([b[3] for b in batch])
            if config.dropout > 0.0:
                reprs = reprs * dropout_mask(rng, reprs.shape, config.dropout, np.float32)
            _, grads = scorer_loss_and_grads(model.params, reprs, prev, legal, golds)
            optim.step(grads)
    return model


def extend_labels(base: NerModel, new_labels: Sequence[str], seed: int = 0) -> NerModel:
    """Grow the action inventory for `new_labels` without any training.

    Old action rows (output layer and previous-action embeddings) are copied
    verbatim, so the extended scorer reproduces the base model's scores on old
    actions exactly; only the new labels' rows are freshly initialized.
    """
    if not new_labels:
        raise TaggerError("no new labels given")
    scheme = base.scheme.extend(new_labels)  # raises on overlap
    rng = np.random.default_rng(seed)
    old = base.params
    n_old = base.scheme.n_actions
    n_new = scheme.n_actions

    act_emb = uniform_rows(rng, n_new + 1, base.config.action_dim, 0.1)
    act_emb[:n_old] = old["act_emb"][:n_old]
    act_emb[n_new] = old["act_emb"][n_old]  # begin-of-sentence row moves to the end

    w2 = glorot(rng, n_new, base.config.hidden)
    w2[:n_old] = old["w2"]
    b2 = np.zeros(n_new, dtype=np.float32)
    b2[:n_old] = old["b2"]

    params = {
        "act_emb": act_emb,
        "w1": old["w1"].copy(),
        "b1": old["b1"].copy(),
        "w2": w2,
        "b2": b2,
    }
    return NerModel(scheme, base.table, base.encoder, params, base.config)


def fine_tune_extend(
    base: NerModel,
    new_labels: Sequence[str],
    train_data: Dataset,
    config: TrainConfig,
) -> NerModel:
    """Extend the label set, then train on the new domain's data."""
    return train(extend_labels(base, new_labels, config.seed), train_data, config)


def decode_greedy(model: NerModel, tokens: Sequence[Token]) -> list[EntitySpan]:
    """Left-to-right argmax over the legal actions at each step."""
    return model.decode(tokens)


def predict(model: NerModel, dataset: Dataset) -> Dataset:
    """Replace every document's spans with the model's decoded spans."""
    docs = tuple(
        Document(doc.id, doc.text, doc.tokens, tuple(sorted(model.decode(doc.tokens))))
        for doc in dataset
    )
    return Dataset(docs, dataset.label_set | frozenset(model.scheme.labels))
