"""Single command-line entry point for the whole pipeline.

Every subcommand resolves its settings as: built-in defaults, then the JSON
config file given with --config, then explicit flags (flags win). Commands
that write artifacts also write a run manifest next to them with the resolved
config, seeds, and input hashes, so a run can be reproduced byte for byte.

Exit codes: 0 success, 1 usage/config error, 2 runtime failure, 3 failed
assertion (only `curve --assert-headline`).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

from . import __version__, corpus, harness, synth
from .embeddings import (
    SkipGramConfig,
    load_embeddings,
    save_embeddings,
    train_static_embeddings,
)
from .encoder import PretrainConfig, load_encoder, pretrain_contextual, save_encoder
from .evaluation import compute_report
from .tagger import (
    LabelScheme,
    ModelConfig,
    TrainConfig,
    blank,
    fine_tune_extend,
    load_model,
    predict,
    save_model,
    train,
)


class CliError(Exception):
    def __init__(self, category: str, message: str, exit_code: int):
        super().__init__(message)
        self.category = category
        self.exit_code = exit_code


def _config_error(message: str) -> CliError:
    return CliError("config", message, 1)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def manifest_path(artifact: Path) -> Path:
    return artifact.parent / (artifact.name + ".manifest.json")


def write_manifest(
    out: Path, subcommand: str, settings: dict, inputs: list[Path], artifacts: list[Path]
) -> None:
    manifest = {
        "subcommand": subcommand,
        "version": __version__,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "config": settings,
        "seed": settings.get("seed"),
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "artifacts": [str(p) for p in artifacts],
    }
    out.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def resolve(args: argparse.Namespace, keys: dict[str, object]) -> dict:
    """defaults < config file < flags, per key."""
    settings = dict(keys)
    config_path = getattr(args, "config", None)
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise _config_error(f"config file {config_path!r} does not exist")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise _config_error(f"config file {config_path!r} is not valid JSON: {exc}")
        unknown = set(loaded) - set(keys)
        if unknown:
            raise _config_error(f"unknown config keys {sorted(unknown)!r}")
        settings.update(loaded)
    for key in keys:
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key] = flag
    return settings


def _require(path_str: str | None, what: str) -> Path:
    if not path_str:
        raise _config_error(f"missing required input: {what}")
    path = Path(path_str)
    if not path.exists():
        raise _config_error(f"{what} {path_str!r} does not exist")
    return path


# -- subcommand implementations ------------------------------------------------


def cmd_ingest(args) -> int:
    out = Path(args.out)
    docs = []
    for file_str in args.files:
        path = _require(file_str, "input file")
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except UnicodeDecodeError as exc:
            raise CliError("runtime", f"{path} is not valid UTF-8: {exc}", 2)
        for i, line in enumerate(l for l in lines if l.strip()):
            docs.append(corpus.Document.create(f"{path.stem}-{i:05d}", line))
    dataset = corpus.Dataset.from_documents(docs, [])
    corpus.save_documents(dataset, out)
    write_manifest(manifest_path(out), "ingest",
                   {"files": list(args.files), "seed": None}, [Path(f) for f in args.files], [out])
    print(f"ingested {len(docs)} documents -> {out}")
    return 0


def cmd_synth(args) -> int:
    settings = resolve(args, {
        "docs": 200, "domain": "target", "extra_raw": 0, "seed": 0,
        "label_targets": None,
    })
    spec = synth.SynthSpec(
        n_docs=settings["docs"], seed=settings["seed"], domain=settings["domain"],
        extra_raw=settings["extra_raw"], label_targets=settings["label_targets"],
    )
    raw, dataset = synth.generate_synthetic_corpus(spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_path = out_dir / f"{settings['domain']}.jsonl"
    corpus_path = out_dir / f"{settings['domain']}-corpus.txt"
    corpus.save_documents(dataset, data_path)
    corpus.save_raw_corpus(raw, corpus_path)
    write_manifest(out_dir / "manifest.json", "synth", settings, [],
                   [data_path, corpus_path])
    stats = corpus.dataset_stats(dataset)
    print(f"generated {stats.documents} documents, spans {dict(stats.span_counts)}")
    return 0


def cmd_split(args) -> int:
    settings = resolve(args, {"test_ratio": 0.2, "fraction": 1.0, "seed": 0})
    data = _require(args.data, "dataset")
    dataset = corpus.load_documents(data)
    spec = corpus.SplitSpec(settings["test_ratio"], settings["fraction"], settings["seed"])
    train_set, test_set = corpus.split_train_test(dataset, spec)
    if settings["fraction"] < 1.0:
        train_set = corpus.take_fraction(train_set, settings["fraction"], settings["seed"])
    out_train, out_test = Path(args.out_train), Path(args.out_test)
    corpus.save_documents(train_set, out_train)
    corpus.save_documents(test_set, out_test)
    write_manifest(manifest_path(out_train), "split", settings,
                   [data], [out_train, out_test])
    print(f"split {len(dataset)} -> train {len(train_set)}, test {len(test_set)}")
    return 0


def cmd_embed(args) -> int:
    settings = resolve(args, {
        "dim": 64, "window": 2, "negatives": 5, "epochs": 10,
        "learning_rate": 0.05, "min_count": 1, "seed": 0,
    })
    corpus_path = _require(args.corpus, "raw corpus")
    sentences = corpus.load_raw_corpus(corpus_path)
    table = train_static_embeddings(sentences, SkipGramConfig(**settings))
    out = Path(args.out)
    save_embeddings(table, out)
    write_manifest(manifest_path(out), "embed",
                   settings, [corpus_path], [out])
    print(f"trained {len(table.vocab)}-word table (dim {table.dim}) -> {out}")
    return 0


def cmd_pretrain(args) -> int:
    settings = resolve(args, {
        "epochs": 100, "patience": 10, "dropout": 0.1, "learning_rate": 1e-3,
        "batch_size": 32, "seed": 0, "loss": "cosine", "mask_rate": 0.25,
        "depth": 4, "window": 1,
    })
    corpus_path = _require(args.corpus, "raw corpus")
    seeds_path = _require(args.seeds, "seed embedding table")
    sentences = corpus.load_raw_corpus(corpus_path)
    seeds = load_embeddings(seeds_path)
    encoder, report = pretrain_contextual(sentences, seeds, PretrainConfig(**settings))
    out = Path(args.out)
    save_encoder(encoder, out)
    report_path = out.with_suffix(out.suffix + ".report.json")
    report_path.write_text(json.dumps({
        "epoch_losses": list(report.epoch_losses),
        "stopped_epoch": report.stopped_epoch,
        "seconds": report.seconds,
    }, indent=2) + "\n")
    write_manifest(manifest_path(out), "pretrain",
                   settings, [corpus_path, seeds_path], [out, report_path])
    print(f"pretrained encoder for {report.stopped_epoch} epochs "
          f"(final loss {report.epoch_losses[-1]:.4f}) -> {out}")
    return 0


def _train_config(settings: dict) -> TrainConfig:
    return TrainConfig(
        iterations=settings["iterations"], dropout=settings["dropout"],
        batch_size=settings["batch_size"], learning_rate=settings["learning_rate"],
        seed=settings["seed"], shuffle=settings["shuffle"],
    )


_TRAIN_KEYS = {
    "iterations": 100, "dropout": 0.2, "batch_size": 32,
    "learning_rate": 5e-3, "seed": 0, "shuffle": True,
    "hidden": 64, "action_dim": 8,
}


def cmd_train(args) -> int:
    settings = resolve(args, dict(_TRAIN_KEYS, labels=None))
    data_path = _require(args.data, "training data")
    table_path = _require(args.table, "embedding table")
    dataset = corpus.load_documents(data_path)
    table = load_embeddings(table_path)
    encoder = None
    inputs = [data_path, table_path]
    if args.encoder:
        enc_path = _require(args.encoder, "encoder")
        encoder = load_encoder(enc_path)
        inputs.append(enc_path)
    labels = settings["labels"] or sorted(dataset.label_set)
    if not labels:
        raise _config_error("no labels: dataset has no spans and --labels not given")
    base = blank(
        LabelScheme(labels), table, encoder,
        ModelConfig(hidden=settings["hidden"], action_dim=settings["action_dim"],
                    seed=settings["seed"]),
    )
    model = train(base, dataset, _train_config(settings))
    out = Path(args.out)
    save_model(model, out)
    write_manifest(manifest_path(out), "train",
                   settings, inputs, [out])
    print(f"trained {len(labels)}-label model on {len(dataset)} documents -> {out}")
    return 0


def cmd_finetune(args) -> int:
    settings = resolve(args, dict(_TRAIN_KEYS, new_labels=None))
    base_path = _require(args.base, "base model")
    data_path = _require(args.data, "training data")
    base = load_model(base_path)
    dataset = corpus.load_documents(data_path)
    new_labels = settings["new_labels"]
    if new_labels is None:
        new_labels = sorted(dataset.label_set - set(base.scheme.labels))
    if not new_labels:
        raise _config_error("no new labels to add (all dataset labels already in base)")
    model = fine_tune_extend(base, new_labels, dataset, _train_config(settings))
    out = Path(args.out)
    save_model(model, out)
    write_manifest(manifest_path(out), "finetune",
                   settings, [base_path, data_path], [out])
    print(f"extended base with {new_labels} and fine-tuned -> {out}")
    return 0


def cmd_eval(args) -> int:
    settings = resolve(args, {"average": "micro"})
    gold_path = _require(args.gold, "gold dataset")
    gold = corpus.load_documents(gold_path)
    inputs = [gold_path]
    if bool(args.pred) == bool(args.model):
        raise _config_error("give exactly one of --pred or --model")
    if args.pred:
        pred_path = _require(args.pred, "predictions")
        pred = corpus.load_documents(pred_path)
        inputs.append(pred_path)
    else:
        model_path = _require(args.model, "model")
        pred = predict(load_model(model_path), gold)
        inputs.append(model_path)
    report = compute_report(gold, pred, settings["average"])
    sys.stdout.write(report.to_table())
    if args.out:
        out = Path(args.out)
        out.write_text(report.to_json() + "\n")
        write_manifest(manifest_path(out), "eval", settings, inputs, [out])
    return 0


def cmd_curve(args) -> int:
    settings = resolve(args, {
        "target_dataset": None, "source_dataset": None, "raw_corpus": None,
        "methods": list(harness.ALL_METHODS),
        "fractions": [0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
        "seeds": [0, 1, 2, 3, 4],
        "test_ratio": 0.2, "split_seed": 13,
        "source_labels": ["DISEASE", "CHEMICAL"], "source_gate": 0.8,
        "embed_config": {}, "pretrain_config": {}, "train_config": {},
        "model_config": {},
    })
    if args.seed is not None:
        settings["seeds"] = [args.seed]
    for key in ("target_dataset", "source_dataset", "raw_corpus"):
        _require(settings[key], key)
    try:
        spec = harness.ExperimentSpec(
            target_dataset=settings["target_dataset"],
            source_dataset=settings["source_dataset"],
            raw_corpus=settings["raw_corpus"],
            methods=tuple(settings["methods"]),
            fractions=tuple(settings["fractions"]),
            seeds=tuple(settings["seeds"]),
            test_ratio=settings["test_ratio"],
            split_seed=settings["split_seed"],
            source_labels=tuple(settings["source_labels"]),
            source_gate=settings["source_gate"],
            embed_config=SkipGramConfig(**settings["embed_config"]),
            pretrain_config=PretrainConfig(**settings["pretrain_config"]),
            train_config=TrainConfig(**settings["train_config"]),
            model_config=ModelConfig(**settings["model_config"]),
        )
    except (harness.HarnessError, TypeError, ValueError) as exc:
        raise _config_error(f"bad experiment spec: {exc}")
    result = harness.run_grid(spec)
    out_dir = Path(args.out_dir)
    written = harness.emit_reports(result, out_dir)
    (out_dir / "grid.json").write_text(
        json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    ok, margin = True, 0.0
    if args.assert_headline:
        ok, margin = harness.headline_check(result)
        print(f"headline: pretrained@0.5 vs blank@1.0 margin {margin:+.3f} "
              f"-> {'pass' if ok else 'FAIL'}")
    for path in written:
        print(f"wrote {path}")
    if not ok:
        raise CliError("assert", f"headline check failed (margin {margin:+.3f})", 3)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import AnnotationStore, create_app

    store = AnnotationStore(args.store)
    app = create_app(store, auth_token=args.token)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nerlab",
        description="span-based NER workbench: data, representations, tagging, "
                    "evaluation, experiments, and the annotation service",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file (flags override it)")
        p.add_argument("--seed", type=int, help="RNG seed")

    p = sub.add_parser("ingest", help="collate raw text files into a JSONL dataset")
    p.add_argument("files", nargs="+")
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("synth", help="generate the synthetic annotated corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--docs", type=int)
    p.add_argument("--domain", choices=["target", "source"])
    p.add_argument("--extra-raw", dest="extra_raw", type=int)
    add_common(p)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("split", help="deterministic train/test split")
    p.add_argument("--data", required=True)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.add_argument("--test-ratio", dest="test_ratio", type=float)
    p.add_argument("--fraction", type=float)
    add_common(p)
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("embed", help="train static word vectors on a raw corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--negatives", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--min-count", dest="min_count", type=int)
    add_common(p)
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("pretrain", help="pretrain the contextual encoder")
    p.add_argument("--corpus", required=True)
    p.add_argument("--seeds", required=True, help="seed embedding table file")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--loss", choices=["cosine", "l2"])
    p.add_argument("--mask-rate", dest="mask_rate", type=float)
    p.add_argument("--depth", type=int)
    p.add_argument("--window", type=int)
    add_common(p)
    p.set_defaults(fn=cmd_pretrain)

    def add_train_flags(p):
        p.add_argument("--iterations", type=int)
        p.add_argument("--dropout", type=float)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--learning-rate", dest="learning_rate", type=float)
        p.add_argument("--hidden", type=int)
        p.add_argument("--action-dim", dest="action_dim", type=int)

    p = sub.add_parser("train", help="train a tagger from scratch")
    p.add_argument("--data", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--encoder")
    p.add_argument("--labels", type=lambda s: s.split(","))
    p.add_argument("--out", required=True)
    add_train_flags(p)
    add_common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("finetune", help="extend a model with new labels and retrain")
    p.add_argument("--base", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--new-labels", dest="new_labels", type=lambda s: s.split(","))
    p.add_argument("--out", required=True)
    add_train_flags(p)
    add_common(p)
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("eval", help="exact-span P/R/F1 report")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred")
    p.add_argument("--model")
    p.add_argument("--average", choices=["micro", "macro"])
    p.add_argument("--out")
    add_common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("curve", help="run the method x fraction x seed grid")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--assert-headline", action="store_true")
    add_common(p)
    p.set_defaults(fn=cmd_curve)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--store", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--token")
    add_common(p)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except (corpus.CorpusError, ValueError, OSError) as exc:
        print(f"error[runtime]: {exc}", file=sys.stderr)
        return 2
    except harness.HarnessError as exc:
        print(f"error[runtime]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
