"""Learning-curve experiment grid: methods x training fractions x seeds.

Three ways of building a tagger are compared under identical data conditions:

* ``blank``             fresh scorer, static-vector representations
* ``transfer``          scorer fine-tuned from a two-label source model with
                        the label set extended to the target inventory
* ``transfer+pretrain`` same, but with the pretrained contextual encoder
                        attached as the representation layer

Every cell of one grid run shares the same test split (verified by hash), and
all methods see the same per-seed fraction subsets, so cells differ only in
method and data quantity.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping

from . import __version__
from .corpus import (
    Dataset,
    SplitSpec,
    load_documents,
    load_raw_corpus,
    split_train_test,
    take_fraction,
)
from .embeddings import (
    SkipGramConfig,
    StaticEmbeddingTable,
    seed_embedding_table,
    train_static_embeddings,
)
from .encoder import ContextualEncoder, PretrainConfig, pretrain_contextual
from .evaluation import EvalReport, compute_report
from .tagger import (
    LabelScheme,
    ModelConfig,
    NerModel,
    TrainConfig,
    blank,
    fine_tune_extend,
    predict,
    train,
)

METHOD_BLANK = "blank"
METHOD_TRANSFER = "transfer"
METHOD_PRETRAIN = "transfer+pretrain"
ALL_METHODS = (METHOD_BLANK, METHOD_TRANSFER, METHOD_PRETRAIN)


class HarnessError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    target_dataset: str
    source_dataset: str
    raw_corpus: str
    methods: tuple[str, ...] = ALL_METHODS
    fractions: tuple[float, ...] = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    test_ratio: float = 0.2
    split_seed: int = 13
    source_labels: tuple[str, ...] = ("DISEASE", "CHEMICAL")
    source_gate: float = 0.8
    embed_config: SkipGramConfig = field(default_factory=SkipGramConfig)
    pretrain_config: PretrainConfig = field(default_factory=PretrainConfig)
    train_config: TrainConfig = field(default_factory=TrainConfig)
    model_config: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self) -> None:
        if not self.methods:
            raise HarnessError("spec lists no methods")
        unknown = set(self.methods) - set(ALL_METHODS)
        if unknown:
            raise HarnessError(f"unknown methods {sorted(unknown)!r}")
        if not self.fractions or not self.seeds:
            raise HarnessError("spec needs at least one fraction and one seed")
        if any(not 0.0 < f <= 1.0 for f in self.fractions):
            raise HarnessError("fractions must lie in (0, 1]")
        if any(a >= b for a, b in zip(self.fractions, self.fractions[1:])):
            raise HarnessError("fractions must be strictly increasing")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CellResult:
    method: str
    fraction: float
    seed: int
    report: EvalReport
    seconds: float


class GridResult:
    def __init__(
        self,
        spec: ExperimentSpec,
        cells: dict[tuple[str, float, int], CellResult],
        test_hash: str,
    ):
        self.spec = spec
        self.cells = cells
        self.test_hash = test_hash

    def cell(self, method: str, fraction: float, seed: int) -> CellResult:
        try:
            return self.cells[(method, fraction, seed)]
        except KeyError:
            raise HarnessError(
                f"grid has no cell method={method} fraction={fraction} seed={seed}"
            ) from None

    def mean_f1(self, method: str, fraction: float) -> float:
        scores = [self.cell(method, fraction, s).report.f1 for s in self.spec.seeds]
        return sum(scores) / len(scores)

    def mean_pr(self, method: str, fraction: float) -> tuple[float, float]:
        reports = [self.cell(method, fraction, s).report for s in self.spec.seeds]
        p = sum(r.overall[0] for r in reports) / len(reports)
        r_ = sum(r.overall[1] for r in reports) / len(reports)
        return p, r_

    def mean_label_f1(self, method: str, fraction: float, label: str) -> float:
        scores = []
        for s in self.spec.seeds:
            counts = self.cell(method, fraction, s).report.per_label.get(label)
            scores.append(counts.f1 if counts is not None else 0.0)
        return sum(scores) / len(scores)

    def to_dict(self, include_timing: bool = True) -> dict:
        cells = []
        for (method, fraction, seed), cell in sorted(self.cells.items()):
            entry = {
                "method": method,
                "fraction": fraction,
                "seed": seed,
                "report": cell.report.to_dict(),
            }
            if include_timing:
                entry["seconds"] = cell.seconds
            cells.append(entry)
        return {
            "spec": self.spec.to_dict(),
            "test_hash": self.test_hash,
            "cells": cells,
            "aggregates": {
                method: {
                    str(fraction): {
                        "precision": self.mean_pr(method, fraction)[0],
                        "recall": self.mean_pr(method, fraction)[1],
                        "f1": self.mean_f1(method, fraction),
                    }
                    for fraction in self.spec.fractions
                }
                for method in self.spec.methods
            },
        }

    def metrics_json(self) -> str:
        """Timing-free serialization: identical reruns give identical bytes."""
        return json.dumps(self.to_dict(include_timing=False), sort_keys=True)


def dataset_hash(dataset: Dataset) -> str:
    h = hashlib.sha256()
    for doc in dataset:
        h.update(doc.id.encode())
        h.update(doc.text.encode())
        for s in doc.spans:
            h.update(f"{s.start}:{s.end}:{s.label}".encode())
    return h.hexdigest()


def _sub_seed(seed: int, stream: int) -> int:
    return seed * 1000003 + stream


def target_scheme(spec: ExperimentSpec, target: Dataset) -> LabelScheme:
    """Source labels first so transfer keeps its action indices, then the
    remaining target labels in sorted order."""
    extra = sorted(set(target.label_set) - set(spec.source_labels))
    return LabelScheme(tuple(spec.source_labels) + tuple(extra))


@dataclass(frozen=True)
class SharedComponents:
    table: StaticEmbeddingTable
    source_model: NerModel
    source_f1: float
    encoder: ContextualEncoder | None


def build_shared(
    spec: ExperimentSpec,
    raw: list[str],
    source: Dataset,
    seed: int,
) -> SharedComponents:
    """Static table, gated source model, and (if needed) pretrained encoder."""
    table = train_static_embeddings(
        raw, replace(spec.embed_config, seed=_sub_seed(seed, 1))
    )

    src_train, src_test = split_train_test(
        source, SplitSpec(test_ratio=0.2, seed=_sub_seed(seed, 2))
    )
    source_model = train(
        blank(
            LabelScheme(spec.source_labels),
            table,
            None,
            replace(spec.model_config, seed=_sub_seed(seed, 3)),
        ),
        src_train,
        replace(spec.train_config, seed=_sub_seed(seed, 4)),
    )
    gate_report = compute_report(src_test, predict(source_model, src_test))
    if gate_report.f1 <= spec.source_gate:
        raise HarnessError(
            f"source model failed the sanity gate: F1 {gate_report.f1:.3f} "
            f"<= {spec.source_gate} (seed {seed})"
        )

    encoder = None
    if METHOD_PRETRAIN in spec.methods:
        seeds_table = seed_embedding_table(
            table, raw, min_count=spec.embed_config.min_count,
            seed=_sub_seed(seed, 5),
        )
        encoder, _ = pretrain_contextual(
            raw, seeds_table,
            replace(spec.pretrain_config, seed=_sub_seed(seed, 6)),
        )
    return SharedComponents(table, source_model, gate_report.f1, encoder)


def build_source_model(spec: ExperimentSpec, seed: int | None = None) -> NerModel:
    """Train the two-label base model used by the transfer methods."""
    raw = load_raw_corpus(spec.raw_corpus)
    source = load_documents(spec.source_dataset)
    shared = build_shared(
        replace(spec, methods=(METHOD_TRANSFER,)),
        raw,
        source,
        spec.seeds[0] if seed is None else seed,
    )
    return shared.source_model


def _build_cell_model(
    spec: ExperimentSpec,
    method: str,
    scheme: LabelScheme,
    shared: SharedComponents,
    subset: Dataset,
    seed: int,
) -> NerModel:
    train_cfg = replace(spec.train_config, seed=_sub_seed(seed, 7))
    new_labels = [l for l in scheme.labels if l not in spec.source_labels]
    if method == METHOD_BLANK:
        base = blank(scheme, shared.table, None,
                     replace(spec.model_config, seed=_sub_seed(seed, 8)))
        return train(base, subset, train_cfg)
    if method == METHOD_TRANSFER:
        return fine_tune_extend(shared.source_model, new_labels, subset, train_cfg)
    if method == METHOD_PRETRAIN:
        base = shared.source_model.with_encoder(shared.encoder)
        return fine_tune_extend(base, new_labels, subset, train_cfg)
    raise HarnessError(f"unknown method {method!r}")


def run_grid(spec: ExperimentSpec) -> GridResult:
    """Run every (method, fraction, seed) cell and collect its evaluation.

    Deterministic: rerunning an identical spec reproduces the same metrics.
    Any cell failure aborts the run with the cell's identity in the error.
    """
    target = load_documents(spec.target_dataset)
    source = load_documents(spec.source_dataset)
    raw = load_raw_corpus(spec.raw_corpus)

    train_set, test_set = split_train_test(
        target, SplitSpec(test_ratio=spec.test_ratio, seed=spec.split_seed)
    )
    test_hash = dataset_hash(test_set)
    scheme = target_scheme(spec, target)

    cells: dict[tuple[str, float, int], CellResult] = {}
    for seed in spec.seeds:
        try:
            shared = build_shared(spec, raw, source, seed)
        except Exception as exc:
            raise HarnessError(f"shared build failed for seed={seed}: {exc}") from exc
        subsets = {
            fraction: take_fraction(train_set, fraction, _sub_seed(seed, 9))
            for fraction in spec.fractions
        }
        for fraction in spec.fractions:
            for method in spec.methods:
                started = time.perf_counter()
                try:
                    model = _build_cell_model(
                        spec, method, scheme, shared, subsets[fraction], seed
                    )
                    report = compute_report(test_set, predict(model, test_set))
                except Exception as exc:
                    raise HarnessError(
                        f"cell method={method} fraction={fraction} seed={seed} "
                        f"failed: {exc}"
                    ) from exc
                cells[(method, fraction, seed)] = CellResult(
                    method, fraction, seed, report, time.perf_counter() - started
                )
    return GridResult(spec, cells, test_hash)


def headline_check(result: GridResult) -> tuple[bool, float]:
    """Does the pretrained-transfer model at half the data beat the blank
    model at all of it? Returns (verdict, margin)."""
    half = result.mean_f1(METHOD_PRETRAIN, 0.5)
    full = result.mean_f1(METHOD_BLANK, 1.0)
    return half >= full, half - full


def emit_reports(result: GridResult, out_dir: str | Path) -> list[Path]:
    """Write the run's reports: overall-metric CSV, per-entity CSV at the top
    fraction, chart-series JSON, and a machine-readable run manifest."""
    if not result.cells:
        raise HarnessError("grid result has no cells")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = result.spec
    written: list[Path] = []

    table2 = out / "overall_metrics.csv"
    with table2.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fraction", "method", "precision", "recall", "f1"])
        for fraction in spec.fractions:
            for method in spec.methods:
                p, r = result.mean_pr(method, fraction)
                writer.writerow(
                    [fraction, method, f"{p:.3f}", f"{r:.3f}",
                     f"{result.mean_f1(method, fraction):.3f}"]
                )
    written.append(table2)

    top = spec.fractions[-1]
    labels = sorted(
        {l for cell in result.cells.values() for l in cell.report.per_label}
    )
    table3 = out / "entity_f1.csv"
    with table3.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + list(spec.methods))
        for label in labels:
            writer.writerow(
                [label]
                + [f"{result.mean_label_f1(m, top, label):.3f}" for m in spec.methods]
            )
    written.append(table3)

    chart = out / "curve.json"
    chart.write_text(
        json.dumps(
            {
                "fractions": list(spec.fractions),
                "series": {
                    method: [result.mean_f1(method, f) for f in spec.fractions]
                    for method in spec.methods
                },
                "per_seed": {
                    method: {
                        str(seed): [
                            result.cell(method, f, seed).report.f1
                            for f in spec.fractions
                        ]
                        for seed in spec.seeds
                    }
                    for method in spec.methods
                },
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    written.append(chart)

    manifest = out / "manifest.json"
    manifest.write_text(
        json.dumps(
            {
                "kind": "experiment-grid",
                "version": __version__,
                "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                "spec": spec.to_dict(),
                "test_hash": result.test_hash,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    written.append(manifest)
    return written
