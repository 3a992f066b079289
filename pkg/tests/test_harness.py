import json

import pytest

from nerlab import corpus, harness, synth
from nerlab.embeddings import SkipGramConfig
from nerlab.encoder import PretrainConfig
from nerlab.evaluation import Counts, EvalReport
from nerlab.harness import (
    ALL_METHODS,
    CellResult,
    ExperimentSpec,
    GridResult,
    HarnessError,
    build_source_model,
    dataset_hash,
    emit_reports,
    headline_check,
    run_grid,
)
from nerlab.tagger import ModelConfig, TrainConfig


@pytest.fixture(scope="module")
def tiny_files(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("grid")
    raw_t, ds_t = synth.generate_synthetic_corpus(
        synth.SynthSpec(n_docs=120, seed=11, extra_raw=60)
    )
    raw_s, ds_s = synth.generate_synthetic_corpus(
        synth.SynthSpec(n_docs=80, seed=12, domain="source")
    )
    corpus.save_documents(ds_t, tmp / "target.jsonl")
    corpus.save_documents(ds_s, tmp / "source.jsonl")
    corpus.save_raw_corpus(raw_t + raw_s, tmp / "raw.txt")
    return tmp


def tiny_spec(tmp, **overrides):
    defaults = dict(
        target_dataset=str(tmp / "target.jsonl"),
        source_dataset=str(tmp / "source.jsonl"),
        raw_corpus=str(tmp / "raw.txt"),
        methods=(harness.METHOD_BLANK, harness.METHOD_TRANSFER),
        fractions=(0.5, 1.0),
        seeds=(0,),
        source_gate=0.5,
        embed_config=SkipGramConfig(dim=16, epochs=60, learning_rate=0.1),
        pretrain_config=PretrainConfig(epochs=4, depth=2, patience=3),
        train_config=TrainConfig(iterations=60, dropout=0.1),
        model_config=ModelConfig(hidden=32),
    )
    defaults.update(overrides)
    return ExperimentSpec(**defaults)


class TestSpecValidation:
    def test_empty_methods_rejected(self, tiny_files):
        with pytest.raises(HarnessError, match="methods"):
            tiny_spec(tiny_files, methods=())

    def test_unknown_method_rejected(self, tiny_files):
        with pytest.raises(HarnessError, match="unknown"):
            tiny_spec(tiny_files, methods=("blank", "magic"))

    def test_fractions_must_increase(self, tiny_files):
        with pytest.raises(HarnessError, match="increasing"):
            tiny_spec(tiny_files, fractions=(0.5, 0.5))

    def test_fractions_must_be_in_range(self, tiny_files):
        with pytest.raises(HarnessError, match="fractions"):
            tiny_spec(tiny_files, fractions=(0.0, 0.5))


class TestRunGrid:
    def test_single_cell_spec(self, tiny_files):
        spec = tiny_spec(tiny_files, methods=("blank",), fractions=(1.0,), seeds=(3,))
        result = run_grid(spec)
        assert len(result.cells) == 1
        assert result.cell("blank", 1.0, 3).report.f1 >= 0.0

    def test_all_cells_present_and_reproducible(self, tiny_files):
        spec = tiny_spec(tiny_files)
        r1 = run_grid(spec)
        r2 = run_grid(spec)
        assert len(r1.cells) == 4
        assert r1.metrics_json() == r2.metrics_json()
        assert r1.test_hash == r2.test_hash

    def test_source_model_plays_two_label_role(self, tiny_files):
        spec = tiny_spec(tiny_files)
        model = build_source_model(spec, seed=0)
        assert set(model.scheme.labels) == {"DISEASE", "CHEMICAL"}
        assert model.scheme.n_actions == 9

    def test_failed_gate_names_the_seed(self, tiny_files):
        spec = tiny_spec(tiny_files, source_gate=1.1)  # unattainable
        with pytest.raises(HarnessError, match="seed=0"):
            run_grid(spec)


def fake_result(methods=ALL_METHODS, fractions=(0.5, 0.6, 0.7, 0.8, 0.9, 1.0), seeds=(0, 1)):
    spec = ExperimentSpec(
        target_dataset="t.jsonl", source_dataset="s.jsonl", raw_corpus="r.txt",
        methods=tuple(methods), fractions=tuple(fractions), seeds=tuple(seeds),
    )
    cells = {}
    for mi, m in enumerate(methods):
        for fi, f in enumerate(fractions):
            for s in seeds:
                tp = 10 + 5 * mi + 2 * fi
                report = EvalReport({"CHEMICAL": Counts(tp, 5, 5), "DISEASE": Counts(tp, 4, 6)})
                cells[(m, f, s)] = CellResult(m, f, s, report, 0.1)
    return GridResult(spec, cells, "deadbeef")


class TestHeadline:
    def test_margin_and_verdict(self):
        result = fake_result()
        ok, margin = headline_check(result)
        assert ok is (result.mean_f1("transfer+pretrain", 0.5) >= result.mean_f1("blank", 1.0))
        assert margin == pytest.approx(
            result.mean_f1("transfer+pretrain", 0.5) - result.mean_f1("blank", 1.0)
        )

    def test_missing_cells_rejected(self):
        result = fake_result(methods=("blank",))
        with pytest.raises(HarnessError, match="no cell"):
            headline_check(result)

    def test_tie_counts_as_pass(self):
        result = fake_result(methods=("blank", "transfer+pretrain"), fractions=(0.5, 1.0))
        # force identical reports in the two compared cells
        for s in result.spec.seeds:
            result.cells[("transfer+pretrain", 0.5, s)] = result.cells[("blank", 1.0, s)]
        ok, margin = headline_check(result)
        assert ok and margin == 0.0


class TestEmitReports:
    def test_default_grid_shape(self, tmp_path):
        result = fake_result()
        written = emit_reports(result, tmp_path)
        table = (tmp_path / "overall_metrics.csv").read_text().splitlines()
        assert len(table) == 1 + 18  # header + 3 methods x 6 fractions
        chart = json.loads((tmp_path / "curve.json").read_text())
        for method in result.spec.methods:
            assert len(chart["series"][method]) == len(result.spec.fractions)
        entity = (tmp_path / "entity_f1.csv").read_text().splitlines()
        assert entity[0] == "label," + ",".join(result.spec.methods)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["test_hash"] == "deadbeef"
        assert len(written) == 4

    def test_no_cells_fails_before_writing(self, tmp_path):
        result = fake_result()
        result.cells = {}
        out = tmp_path / "reports"
        with pytest.raises(HarnessError):
            emit_reports(result, out)
        assert not out.exists() or not list(out.iterdir())

    def test_csv_bytes_are_deterministic(self, tmp_path):
        result = fake_result()
        emit_reports(result, tmp_path / "a")
        emit_reports(result, tmp_path / "b")
        assert (tmp_path / "a" / "overall_metrics.csv").read_bytes() == \
            (tmp_path / "b" / "overall_metrics.csv").read_bytes()
        assert (tmp_path / "a" / "curve.json").read_bytes() == \
            (tmp_path / "b" / "curve.json").read_bytes()


def test_dataset_hash_tracks_content():
    _, ds = synth.generate_synthetic_corpus(synth.SynthSpec(n_docs=5, seed=1))
    _, ds2 = synth.generate_synthetic_corpus(synth.SynthSpec(n_docs=5, seed=2))
    assert dataset_hash(ds) == dataset_hash(ds)
    assert dataset_hash(ds) != dataset_hash(ds2)
