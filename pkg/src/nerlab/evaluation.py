"""Exact-span matching and micro-averaged precision/recall/F1.

A predicted span counts as a true positive only when a gold span with the
same (start, end, label) exists in the same document; each span matches at
most once. Zero denominators follow the conservative convention: a metric
whose denominator is 0 is reported as 0, and F1 is 0 whenever P + R is 0.
Rounding happens only at presentation time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping

from .corpus import Dataset, EntitySpan


class EvaluationError(ValueError):
    pass


def precision(tp: int, fp: int) -> float:
    return tp / (tp + fp) if tp + fp else 0.0


def recall(tp: int, fn: int) -> float:
    return tp / (tp + fn) if tp + fn else 0.0


def f1_from_pr(p: float, r: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    return 2.0 * p * r / (p + r) if p + r else 0.0


@dataclass(frozen=True)
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def precision(self) -> float:
        return precision(self.tp, self.fp)

    @property
    def recall(self) -> float:
        return recall(self.tp, self.fn)

    @property
    def f1(self) -> float:
        return f1_from_pr(self.precision, self.recall)


def match_spans(
    gold: Iterable[EntitySpan], pred: Iterable[EntitySpan]
) -> dict[str, Counts]:
    """Per-label exact-match counts between two span lists of one document."""
    gold_by_label: dict[str, set[tuple[int, int]]] = {}
    pred_by_label: dict[str, set[tuple[int, int]]] = {}
    for s in gold:
        gold_by_label.setdefault(s.label, set()).add((s.start, s.end))
    for s in pred:
        pred_by_label.setdefault(s.label, set()).add((s.start, s.end))
    out: dict[str, Counts] = {}
    for label in gold_by_label.keys() | pred_by_label.keys():
        g = gold_by_label.get(label, set())
        p = pred_by_label.get(label, set())
        tp = len(g & p)
        out[label] = Counts(tp, len(p) - tp, len(g) - tp)
    return out


@dataclass(frozen=True)
class EvalReport:
    per_label: Mapping[str, Counts]
    average: str = "micro"

    @property
    def overall_counts(self) -> Counts:
        total = Counts()
        for c in self.per_label.values():
            total = total + c
        return total

    @property
    def overall(self) -> tuple[float, float, float]:
        """(precision, recall, f1) under the configured averaging."""
        if self.average == "micro":
            c = self.overall_counts
            return c.precision, c.recall, c.f1
        if not self.per_label:
            return 0.0, 0.0, 0.0
        labels = sorted(self.per_label)
        p = sum(self.per_label[l].precision for l in labels) / len(labels)
        r = sum(self.per_label[l].recall for l in labels) / len(labels)
        return p, r, sum(self.per_label[l].f1 for l in labels) / len(labels)

    @property
    def f1(self) -> float:
        return self.overall[2]

    def to_dict(self) -> dict:
        p, r, f = self.overall
        return {
            "average": self.average,
            "overall": {"tp": self.overall_counts.tp, "fp": self.overall_counts.fp,
                        "fn": self.overall_counts.fn,
                        "precision": p, "recall": r, "f1": f},
            "labels": {
                label: {"tp": c.tp, "fp": c.fp, "fn": c.fn,
                        "precision": c.precision, "recall": c.recall, "f1": c.f1}
                for label, c in sorted(self.per_label.items())
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self, digits: int = 3) -> str:
        """Tab-separated table: one row per label plus an overall row."""
        lines = ["label\tprecision\trecall\tf1"]
        for label, c in sorted(self.per_label.items()):
            lines.append(
                f"{label}\t{c.precision:.{digits}f}\t{c.recall:.{digits}f}\t{c.f1:.{digits}f}"
            )
        p, r, f = self.overall
        lines.append(f"OVERALL\t{p:.{digits}f}\t{r:.{digits}f}\t{f:.{digits}f}")
        return "\n".join(lines) + "\n"


def compute_report(
    gold_dataset: Dataset, pred_dataset: Dataset, average: str = "micro"
) -> EvalReport:
    """Pool exact-match counts across aligned documents, then score.

    Documents are aligned by id; the two datasets must contain the same ids.
    """
    if average not in ("micro", "macro"):
        raise EvaluationError(f"unknown averaging {average!r}")
    gold_docs = {d.id: d for d in gold_dataset}
    pred_docs = {d.id: d for d in pred_dataset}
    if gold_docs.keys() != pred_docs.keys():
        missing = sorted(gold_docs.keys() ^ pred_docs.keys())
        raise EvaluationError(f"document ids do not align, e.g. {missing[:3]!r}")
    totals: dict[str, Counts] = {}
    for doc_id, gold_doc in gold_docs.items():
        for label, counts in match_spans(gold_doc.spans, pred_docs[doc_id].spans).items():
            totals[label] = totals.get(label, Counts()) + counts
    for label in gold_dataset.label_set:
        totals.setdefault(label, Counts())
    return EvalReport(totals, average)
