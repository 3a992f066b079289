"""Annotated-document data model, tokenization, splits, stats, and file I/O.

A "document" here is one pre-segmented record (a sentence or a short note).
Spans are stored as character offsets so they survive re-tokenization; span
boundaries must line up with token boundaries, which is validated whenever a
:class:`Document` is constructed.
"""

from __future__ import annotations

import json
import math
import random
import re
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence


class CorpusError(ValueError):
    """Raised for malformed records or spans that violate corpus invariants."""


_ASCII_PUNCT = frozenset(string.punctuation)
_NONSPACE = re.compile(r"\S+")


@dataclass(frozen=True)
class Token:
    """One token with its character offsets into the owning document text."""

    text: str
    start: int
    end: int

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise CorpusError(f"bad token offsets ({self.start}, {self.end})")


@dataclass(frozen=True, order=True)
class EntitySpan:
    """A labeled character span. `end` is exclusive."""

    start: int
    end: int
    label: str

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise CorpusError(f"bad span offsets ({self.start}, {self.end})")
        if not self.label:
            raise CorpusError("span label must be non-empty")


def tokenize(text: str) -> list[Token]:
    """Split `text` into tokens with exact character offsets.

    Rules: split on whitespace, then detach leading/trailing ASCII
    punctuation one character at a time. Internal punctuation (hyphens,
    apostrophes, digits' dots) stays inside the token. Deterministic;
    empty input yields an empty list.
    """
    tokens: list[Token] = []
    for m in _NONSPACE.finditer(text):
        start, end = m.start(), m.end()
        left = start
        while left < end and text[left] in _ASCII_PUNCT:
            tokens.append(Token(text[left], left, left + 1))
            left += 1
        tail: list[Token] = []
        right = end
        while right > left and text[right - 1] in _ASCII_PUNCT:
            tail.append(Token(text[right - 1], right - 1, right))
            right -= 1
        if left < right:
            tokens.append(Token(text[left:right], left, right))
        tokens.extend(reversed(tail))
    return tokens


@dataclass(frozen=True)
class Document:
    """A tokenized text with non-overlapping labeled spans.

    Invariants are checked at construction: token texts must match their
    text slices, tokens must be ordered and disjoint, spans must be
    disjoint and aligned to token boundaries.
    """

    id: str
    text: str
    tokens: tuple[Token, ...]
    spans: tuple[EntitySpan, ...]

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusError("document id must be non-empty")
        prev_end = -1
        starts = set()
        ends = set()
        for tok in self.tokens:
            if tok.start < prev_end:
                raise CorpusError(f"document {self.id!r}: overlapping tokens")
            if self.text[tok.start : tok.end] != tok.text:
                raise CorpusError(
                    f"document {self.id!r}: token text mismatch at {tok.start}"
                )
            prev_end = tok.end
            starts.add(tok.start)
            ends.add(tok.end)
        last = -1
        for span in sorted(self.spans):
            if span.start < last:
                raise CorpusError(f"document {self.id!r}: overlapping spans")
            if span.start not in starts or span.end not in ends:
                raise CorpusError(
                    f"document {self.id!r}: span ({span.start}, {span.end}) "
                    "not aligned to token boundaries"
                )
            last = span.end

    @staticmethod
    def create(doc_id: str, text: str, spans: Iterable[EntitySpan] = ()) -> "Document":
        """Tokenize `text` and build a validated document."""
        return Document(doc_id, text, tuple(tokenize(text)), tuple(sorted(spans)))

    def span_token_range(self, span: EntitySpan) -> tuple[int, int]:
        """Return (first, last) token indices covered by `span` (inclusive)."""
        first = last = -1
        for i, tok in enumerate(self.tokens):
            if tok.start == span.start:
                first = i
            if tok.end == span.end:
                last = i
        if first < 0 or last < 0 or last < first:
            raise CorpusError(
                f"document {self.id!r}: span ({span.start}, {span.end}) "
                "not aligned to token boundaries"
            )
        return first, last


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of documents plus the label inventory."""

    documents: tuple[Document, ...]
    label_set: frozenset[str]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for doc in self.documents:
            if doc.id in seen:
                raise CorpusError(f"duplicate document id {doc.id!r}")
            seen.add(doc.id)
            for span in doc.spans:
                if span.label not in self.label_set:
                    raise CorpusError(
                        f"document {doc.id!r}: label {span.label!r} not in label set"
                    )

    @staticmethod
    def from_documents(
        documents: Iterable[Document], label_set: Iterable[str] | None = None
    ) -> "Dataset":
        docs = tuple(documents)
        if label_set is None:
            labels = frozenset(s.label for d in docs for s in d.spans)
        else:
            labels = frozenset(label_set)
        return Dataset(docs, labels)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)


@dataclass(frozen=True)
class SplitSpec:
    """Reproducible split parameters: same spec, same dataset, same result."""

    test_ratio: float
    fraction: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.test_ratio < 1.0:
            raise CorpusError(f"test_ratio must be in (0,1), got {self.test_ratio}")
        if not 0.0 < self.fraction <= 1.0:
            raise CorpusError(f"fraction must be in (0,1], got {self.fraction}")


def split_train_test(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Shuffle documents with the SplitSpec seed and cut off the test portion.

    Test size is round(total * test_ratio); train gets the remainder, so the
    two parts always partition the input exactly.
    """
    if len(dataset) == 0:
        raise CorpusError("cannot split an empty dataset")
    docs = list(dataset.documents)
    random.Random(spec.seed).shuffle(docs)
    n_test = round(len(docs) * spec.test_ratio)
    train = Dataset(tuple(docs[: len(docs) - n_test]), dataset.label_set)
    test = Dataset(tuple(docs[len(docs) - n_test :]), dataset.label_set)
    return train, test


def take_fraction(train: Dataset, fraction: float, seed: int) -> Dataset:
    """Return the first floor(fraction * n) documents of a seeded shuffle.

    Subsets are nested: with the same seed, the result for a smaller
    fraction is a prefix of the result for a larger one, so learning
    curves differ only in data quantity.
    """
    if not 0.0 < fraction <= 1.0:
        raise CorpusError(f"fraction must be in (0,1], got {fraction}")
    docs = list(train.documents)
    random.Random(seed).shuffle(docs)
    k = math.floor(fraction * len(docs))
    return Dataset(tuple(docs[:k]), train.label_set)


@dataclass(frozen=True)
class DatasetStats:
    documents: int
    span_counts: Mapping[str, int]

    @property
    def total_spans(self) -> int:
        return sum(self.span_counts.values())


def dataset_stats(dataset: Dataset) -> DatasetStats:
    """Count documents and spans per label (zero for unused labels)."""
    counts = {label: 0 for label in sorted(dataset.label_set)}
    for doc in dataset.documents:
        for span in doc.spans:
            counts[span.label] += 1
    return DatasetStats(len(dataset), counts)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

FORMAT_JSONL = "jsonl"
FORMAT_CONLL = "conll"


def bilou_tags(doc: Document) -> list[str]:
    """Per-token BILOU tag strings for a document's spans.

    Single-token spans become U-label; multi-token spans become
    B-label, I-label*, L-label; everything else is O.
    """
    tags = ["O"] * len(doc.tokens)
    for span in doc.spans:
        first, last = doc.span_token_range(span)
        if first == last:
            tags[first] = f"U-{span.label}"
        else:
            tags[first] = f"B-{span.label}"
            for i in range(first + 1, last):
                tags[i] = f"I-{span.label}"
            tags[last] = f"L-{span.label}"
    return tags


def spans_from_tags(
    tokens: Sequence[Token], tags: Sequence[str], doc_id: str = "?"
) -> list[EntitySpan]:
    """Decode a BILOU tag sequence back into character spans.

    Strict: rejects ill-formed sequences (I/L without a matching open B,
    dangling B at the end, label switches mid-entity).
    """
    if len(tokens) != len(tags):
        raise CorpusError(f"document {doc_id!r}: {len(tags)} tags for {len(tokens)} tokens")
    spans: list[EntitySpan] = []
    open_label: str | None = None
    open_start = 0
    for i, tag in enumerate(tags):
        if tag == "O" or tag.startswith(("B-", "U-")):
            if open_label is not None:
                raise CorpusError(f"document {doc_id!r}: unterminated entity before {tag!r}")
            if tag.startswith("U-"):
                spans.append(EntitySpan(tokens[i].start, tokens[i].end, tag[2:]))
            elif tag.startswith("B-"):
                open_label = tag[2:]
                open_start = tokens[i].start
        elif tag.startswith(("I-", "L-")):
            if open_label != tag[2:]:
                raise CorpusError(f"document {doc_id!r}: {tag!r} without open {tag[2:]!r}")
            if tag.startswith("L-"):
                spans.append(EntitySpan(open_start, tokens[i].end, open_label))
                open_label = None
        else:
            raise CorpusError(f"document {doc_id!r}: unknown tag {tag!r}")
    if open_label is not None:
        raise CorpusError(f"document {doc_id!r}: entity still open at end of sequence")
    return spans


def _doc_to_json(doc: Document) -> str:
    payload = {
        "id": doc.id,
        "text": doc.text,
        "spans": [
            {"start": s.start, "end": s.end, "label": s.label} for s in doc.spans
        ],
    }
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":"))


def _doc_from_json(line: str, lineno: int) -> Document:
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(payload, dict):
        raise CorpusError(f"line {lineno}: record must be a JSON object")
    try:
        doc_id = payload["id"]
        text = payload["text"]
        raw_spans = payload["spans"]
    except KeyError as exc:
        raise CorpusError(f"line {lineno}: missing field {exc.args[0]!r}") from exc
    if not isinstance(doc_id, str) or not isinstance(text, str):
        raise CorpusError(f"line {lineno}: id and text must be strings")
    spans = []
    for s in raw_spans:
        try:
            spans.append(EntitySpan(int(s["start"]), int(s["end"]), str(s["label"])))
        except (KeyError, TypeError, CorpusError) as exc:
            raise CorpusError(f"line {lineno}: bad span {s!r} ({exc})") from exc
    try:
        return Document.create(doc_id, text, spans)
    except CorpusError as exc:
        raise CorpusError(f"line {lineno}: {exc}") from exc


def save_documents(dataset: Dataset, path: str | Path, format: str = FORMAT_JSONL) -> None:
    """Write a dataset to `path`. Round-trips losslessly through both formats."""
    path = Path(path)
    if format == FORMAT_JSONL:
        content = "".join(_doc_to_json(doc) + "\n" for doc in dataset.documents)
    elif format == FORMAT_CONLL:
        blocks = []
        for doc in dataset.documents:
            lines = [f"# id = {doc.id}", f"# text = {json.dumps(doc.text, ensure_ascii=False)}"]
            lines += [f"{tok.text}\t{tag}" for tok, tag in zip(doc.tokens, bilou_tags(doc))]
            blocks.append("\n".join(lines))
        content = "\n\n".join(blocks) + ("\n" if blocks else "")
    else:
        raise CorpusError(f"unknown format {format!r}")
    path.write_text(content, encoding="utf-8")


def load_documents(
    path: str | Path, format: str = FORMAT_JSONL, label_set: Iterable[str] | None = None
) -> Dataset:
    """Read a dataset from `path`, validating every record.

    Malformed records are rejected with their line number; misaligned spans
    with the offending document id.
    """
    path = Path(path)
    raw = path.read_text(encoding="utf-8")
    if format == FORMAT_JSONL:
        docs = [
            _doc_from_json(line, lineno)
            for lineno, line in enumerate(raw.splitlines(), start=1)
            if line.strip()
        ]
    elif format == FORMAT_CONLL:
        docs = _parse_conll(raw)
    else:
        raise CorpusError(f"unknown format {format!r}")
    return Dataset.from_documents(docs, label_set)


def _parse_conll(raw: str) -> list[Document]:
    docs: list[Document] = []
    block: list[tuple[int, str]] = []
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if line.strip():
            block.append((lineno, line))
        elif block:
            docs.append(_parse_conll_block(block, len(docs)))
            block = []
    if block:
        docs.append(_parse_conll_block(block, len(docs)))
    return docs


def _parse_conll_block(block: list[tuple[int, str]], index: int) -> Document:
    doc_id: str | None = None
    text: str | None = None
    rows: list[tuple[int, str, str]] = []
    for lineno, line in block:
        if line.startswith("# id = "):
            doc_id = line[len("# id = ") :]
        elif line.startswith("# text = "):
            try:
                text = json.loads(line[len("# text = ") :])
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: bad text metadata ({exc.msg})") from exc
        elif line.startswith("#"):
            continue
        else:
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusError(f"line {lineno}: expected 'token<TAB>tag'")
            rows.append((lineno, parts[0], parts[1]))
    if not rows:
        raise CorpusError(f"block {index}: no token rows")
    if doc_id is None:
        doc_id = f"doc-{index:04d}"
    if text is None:
        # No metadata: reconstruct with single spaces between tokens.
        text = " ".join(tok for _, tok, _ in rows)
    tokens = tokenize(text)
    if [t.text for t in tokens] != [tok for _, tok, _ in rows]:
        raise CorpusError(
            f"document {doc_id!r}: token rows do not match tokenization of text"
        )
    spans = spans_from_tags(tokens, [tag for _, _, tag in rows], doc_id)
    return Document(doc_id, text, tuple(tokens), tuple(sorted(spans)))


def save_raw_corpus(sentences: Iterable[str], path: str | Path) -> None:
    """Write a raw corpus: UTF-8 plain text, one sentence per line."""
    Path(path).write_text(
        "".join(s.replace("\n", " ") + "\n" for s in sentences), encoding="utf-8"
    )


def load_raw_corpus(path: str | Path) -> list[str]:
    """Read a raw corpus file; blank lines are dropped."""
    return [
        line
        for line in Path(path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
