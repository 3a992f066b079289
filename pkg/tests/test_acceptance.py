"""Acceptance suite: one test per release criterion, each printing a PASS line
(run with `pytest tests/test_acceptance.py -v -s`).

The benchmark grid (criteria 2-4) trains 3 methods x 6 fractions x 5 seeds on
the synthetic corpus: 850 target documents (680 train / 170 test), 800 extra
raw sentences, a 400-document two-label source domain. Criterion 11 (scripted
browser flow) lives in the frontend package's own test suite and is not part
of this module; everything here runs with no UI built.
"""

import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import httpx
import numpy as np
import pytest
import uvicorn

from nerlab import corpus, harness, synth
from nerlab.embeddings import (
    SkipGramConfig,
    load_embeddings,
    save_embeddings,
    sgns_loss_and_grads,
    train_static_embeddings,
)
from nerlab.encoder import (
    EncoderConfig,
    N_SHAPE_FEATURES,
    PretrainConfig,
    init_params,
    load_encoder,
    masked_objective,
    masked_objective_value,
    pretrain_contextual,
    save_encoder,
)
from nerlab.evaluation import f1_from_pr
from nerlab.nn import finite_difference, relative_error
from nerlab.service import AnnotationStore, create_app
from nerlab.tagger import (
    LabelScheme,
    ModelConfig,
    TrainConfig,
    actions_to_spans,
    blank,
    extend_labels,
    gold_actions,
    is_valid_sequence,
    load_model,
    predict,
    save_model,
    scorer_loss_and_grads,
    train,
)

PUBLISHED_ROWS = [
    (0.607, 0.539, 0.571), (0.682, 0.719, 0.700), (0.711, 0.759, 0.734),
    (0.647, 0.569, 0.605), (0.714, 0.728, 0.721), (0.740, 0.758, 0.749),
    (0.688, 0.611, 0.647), (0.744, 0.752, 0.748), (0.753, 0.747, 0.750),
    (0.689, 0.646, 0.667), (0.755, 0.741, 0.748), (0.757, 0.778, 0.767),
    (0.696, 0.662, 0.679), (0.747, 0.743, 0.745), (0.754, 0.761, 0.757),
    (0.724, 0.685, 0.704), (0.755, 0.743, 0.749), (0.776, 0.794, 0.785),
]


def ok(criterion: int, message: str) -> None:
    print(f"PASS criterion {criterion}: {message}")


# ---------------------------------------------------------------------------
# Benchmark fixtures
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def benchmark_files(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("benchmark")
    raw_t, ds_t = synth.generate_synthetic_corpus(
        synth.SynthSpec(n_docs=850, seed=101, extra_raw=800)
    )
    raw_s, ds_s = synth.generate_synthetic_corpus(
        synth.SynthSpec(n_docs=400, seed=102, domain="source")
    )
    corpus.save_documents(ds_t, tmp / "target.jsonl")
    corpus.save_documents(ds_s, tmp / "source.jsonl")
    corpus.save_raw_corpus(raw_t + raw_s, tmp / "raw.txt")
    return tmp


def benchmark_spec(tmp, **overrides):
    defaults = dict(
        target_dataset=str(tmp / "target.jsonl"),
        source_dataset=str(tmp / "source.jsonl"),
        raw_corpus=str(tmp / "raw.txt"),
        seeds=(0, 1, 2, 3, 4),
        embed_config=SkipGramConfig(dim=32, epochs=8, learning_rate=0.08),
        pretrain_config=PretrainConfig(epochs=30, patience=8, depth=4),
        train_config=TrainConfig(iterations=100, dropout=0.2, learning_rate=5e-3),
        model_config=ModelConfig(hidden=64),
    )
    defaults.update(overrides)
    return harness.ExperimentSpec(**defaults)


@pytest.fixture(scope="session")
def benchmark_grid(benchmark_files):
    spec = benchmark_spec(benchmark_files)
    target = corpus.load_documents(benchmark_files / "target.jsonl")
    train_set, _ = corpus.split_train_test(
        target, corpus.SplitSpec(spec.test_ratio, seed=spec.split_seed)
    )
    assert len(train_set) >= 600, "benchmark must offer at least 600 training docs"
    started = time.perf_counter()
    result = harness.run_grid(spec)
    elapsed = time.perf_counter() - started
    assert elapsed < 1800, f"grid exceeded the 30-minute budget ({elapsed:.0f}s)"
    return result


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------


def test_criterion_1_metric_oracle_reproduces_published_table():
    started = time.perf_counter()
    for p, r, f1 in PUBLISHED_ROWS:
        assert abs(f1_from_pr(p, r) - f1) <= 0.0005, (p, r, f1)
    for p, r, f1 in [(0.724, 0.685, 0.704), (0.711, 0.759, 0.734), (0.776, 0.794, 0.785)]:
        assert abs(f1_from_pr(p, r) - f1) <= 0.0005
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0
    ok(1, f"all 18 published (P,R,F1) rows reproduced within 0.0005 in {elapsed:.3f}s")


def test_criterion_2_headline_half_data_beats_blank_full(benchmark_grid):
    passed, margin = harness.headline_check(benchmark_grid)
    half = benchmark_grid.mean_f1(harness.METHOD_PRETRAIN, 0.5)
    full = benchmark_grid.mean_f1(harness.METHOD_BLANK, 1.0)
    assert passed, f"pretrained@50% {half:.3f} < blank@100% {full:.3f}"
    ok(2, f"pretrained@50% {half:.3f} >= blank@100% {full:.3f} (margin {margin:+.3f}, 5 seeds)")


def test_criterion_3_method_ordering_at_full_data(benchmark_grid):
    blank_f1 = benchmark_grid.mean_f1(harness.METHOD_BLANK, 1.0)
    transfer_f1 = benchmark_grid.mean_f1(harness.METHOD_TRANSFER, 1.0)
    pretrain_f1 = benchmark_grid.mean_f1(harness.METHOD_PRETRAIN, 1.0)
    assert pretrain_f1 >= transfer_f1 >= blank_f1
    ok(3, f"mean F1 ordering at 100%: {pretrain_f1:.3f} >= {transfer_f1:.3f} >= {blank_f1:.3f}")


def test_transfer_gains_concentrate_on_source_labels(benchmark_grid):
    # supplementary to criterion 3: the fine-tuned model should beat the
    # blank one on the two labels the source model already knew
    for fraction in (0.5, 1.0):
        for label in ("DISEASE", "CHEMICAL"):
            tuned = benchmark_grid.mean_label_f1(harness.METHOD_TRANSFER, fraction, label)
            fresh = benchmark_grid.mean_label_f1(harness.METHOD_BLANK, fraction, label)
            assert tuned >= fresh, (fraction, label, tuned, fresh)


def test_criterion_4_trend_non_decreasing_with_slack(benchmark_grid):
    spec = benchmark_grid.spec
    worst = 0.0
    for method in spec.methods:
        means = [benchmark_grid.mean_f1(method, f) for f in spec.fractions]
        for a, b in zip(means, means[1:]):
            worst = min(worst, b - a)
            assert b >= a - 0.02, f"{method}: {means}"
    ok(4, f"per-method mean F1 non-decreasing in fraction (worst step {worst:+.3f}, slack 0.02)")


def test_criterion_5_gradient_suite_matches_finite_differences():
    started = time.perf_counter()
    rng = np.random.default_rng(0)

    arrays = {
        "center": rng.normal(size=8),
        "positive": rng.normal(size=8),
        "negatives": rng.normal(size=(4, 8)),
    }
    _, d_c, d_p, d_n = sgns_loss_and_grads(**arrays)
    numeric = finite_difference(
        lambda a: sgns_loss_and_grads(a["center"], a["positive"], a["negatives"])[0],
        arrays,
    )
    worst = max(
        relative_error(d_c, numeric["center"]),
        relative_error(d_p, numeric["positive"]),
        relative_error(d_n, numeric["negatives"]),
    )

    depth, window = 2, 1
    params = init_params(EncoderConfig(dim=6, depth=depth, window=window, seed=1),
                         dtype=np.float64)
    base = rng.normal(size=(2, 5, 6 + N_SHAPE_FEATURES))
    lengths = np.array([5, 3])
    focus = np.zeros((2, 5), dtype=bool)
    focus[0, 1] = focus[1, 0] = True
    targets = rng.normal(size=(2, 5, 6))
    targets /= np.linalg.norm(targets, axis=2, keepdims=True)
    for loss_kind in ("cosine", "l2"):
        _, _, grads = masked_objective(
            params, base, lengths, focus, targets, depth, window, loss_kind
        )
        numeric = finite_difference(
            lambda p: masked_objective_value(
                p, base, lengths, focus, targets, depth, window, loss_kind
            ),
            params,
        )
        for name in params:
            worst = max(worst, relative_error(grads[name], numeric[name]))

    scheme = LabelScheme(["X"])
    sparams = {
        "act_emb": rng.normal(size=(scheme.n_actions + 1, 3)),
        "w1": rng.normal(size=(4, 5 + 3)),
        "b1": rng.normal(size=4),
        "w2": rng.normal(size=(scheme.n_actions, 4)),
        "b2": rng.normal(size=scheme.n_actions),
    }
    reprs = rng.normal(size=(6, 5))
    prev = rng.integers(0, scheme.n_actions + 1, size=6)
    legal = np.ones((6, scheme.n_actions), dtype=bool)
    legal[0, 2:4] = False
    golds = np.array([0, 4, 0, 1, 0, 4])
    _, grads = scorer_loss_and_grads(sparams, reprs, prev, legal, golds)
    numeric = finite_difference(
        lambda p: scorer_loss_and_grads(p, reprs, prev, legal, golds)[0], sparams
    )
    for name in sparams:
        worst = max(worst, relative_error(grads[name], numeric[name]))

    elapsed = time.perf_counter() - started
    assert worst < 1e-4
    assert elapsed < 10.0
    ok(5, f"skip-gram, encoder, scorer gradients within {worst:.2e} of central "
          f"differences in {elapsed:.1f}s")


def test_criterion_6_transition_validity(small_table):
    scheme = LabelScheme(["CHEMICAL", "DISEASE", "SYMPTOM", "DOSAGE"])
    rng = np.random.default_rng(23)
    sentences = [
        corpus.tokenize(" ".join(f"w{rng.integers(60)}" for _ in range(rng.integers(1, 11))))
        for _ in range(200)
    ]
    decoded = 0
    for trial in range(50):
        model = blank(scheme, small_table, config=ModelConfig(hidden=8, seed=trial))
        for tokens in sentences:
            spans = model.decode(tokens)
            actions = gold_actions(tokens, spans, scheme)
            assert is_valid_sequence(scheme, actions)
            decoded += 1
    assert decoded == 10_000

    layout_rng = random.Random(7)
    for _ in range(1000):
        n = layout_rng.randint(1, 14)
        tokens = corpus.tokenize(" ".join(f"t{i}" for i in range(n)))
        spans, pos = [], 0
        while pos < n:
            if layout_rng.random() < 0.45:
                end = min(n - 1, pos + layout_rng.randint(0, 3))
                spans.append(corpus.EntitySpan(
                    tokens[pos].start, tokens[end].end, layout_rng.choice(scheme.labels)
                ))
                pos = end + 1
            else:
                pos += 1
        actions = gold_actions(tokens, spans, scheme)
        assert sorted(actions_to_spans(scheme, tokens, actions)) == sorted(spans)
    ok(6, "10,000 fuzzed decodes all BILOU-valid; 1,000 gold-action round-trips exact")


def test_criterion_7_fine_tune_preserves_old_scores(small_table):
    base = blank(LabelScheme(["DISEASE", "CHEMICAL"]), small_table,
                 config=ModelConfig(seed=11))
    extended = extend_labels(base, ["SYMPTOM", "DOSAGE"], seed=29)
    rng = np.random.default_rng(3)
    for _ in range(100):
        reprs = rng.normal(size=(4, base.repr_dim)).astype(np.float32)
        prev = rng.integers(0, base.scheme.n_actions + 1, size=4)
        prev_ext = np.where(prev == base.scheme.n_actions, extended.bos_row, prev)
        old = base.score_matrix(reprs, prev)
        new = extended.score_matrix(reprs, prev_ext)
        assert np.array_equal(new[:, : base.scheme.n_actions], old)
    ok(7, "extended model's old-action scores bitwise-equal to base over 100 random inputs")


def test_criterion_8_pretraining_sanity(benchmark_files):
    degenerate = ["token token token token token"] * 40
    seeds_table = train_static_embeddings(
        degenerate, SkipGramConfig(dim=16, epochs=1, seed=0)
    )
    _, report = pretrain_contextual(
        degenerate, seeds_table,
        PretrainConfig(epochs=20, learning_rate=0.01, dropout=0.0, seed=5, depth=2),
    )
    assert min(report.epoch_losses) < 0.01

    raw = corpus.load_raw_corpus(benchmark_files / "raw.txt")[:400]
    table = train_static_embeddings(raw, SkipGramConfig(dim=24, epochs=5, seed=1))
    for seed in (0, 1, 2):
        _, rep = pretrain_contextual(
            raw, table, PretrainConfig(epochs=10, seed=seed, depth=3)
        )
        assert rep.epoch_losses[9] < rep.epoch_losses[0], seed
    ok(8, f"degenerate-corpus loss {min(report.epoch_losses):.4f} < 0.01 within 20 epochs; "
          "epoch-10 < epoch-1 for seeds 0,1,2")


def test_criterion_9_determinism_and_round_trips(benchmark_files, small_table,
                                                 clean_memorization_set, tmp_path):
    # identical seeds -> byte-identical models
    scheme = LabelScheme(sorted(clean_memorization_set.label_set))
    cfg = TrainConfig(iterations=5, seed=7)
    m1 = train(blank(scheme, small_table), clean_memorization_set, cfg)
    m2 = train(blank(scheme, small_table), clean_memorization_set, cfg)
    p1, p2 = tmp_path / "m1.bin", tmp_path / "m2.bin"
    save_model(m1, p1)
    save_model(m2, p2)
    assert p1.read_bytes() == p2.read_bytes()

    # identical seeds -> byte-identical splits
    target = corpus.load_documents(benchmark_files / "target.jsonl")
    for out in ("s1", "s2"):
        tr, te = corpus.split_train_test(target, corpus.SplitSpec(0.2, seed=13))
        corpus.save_documents(tr, tmp_path / f"{out}-train.jsonl")
        corpus.save_documents(te, tmp_path / f"{out}-test.jsonl")
    assert (tmp_path / "s1-train.jsonl").read_bytes() == (tmp_path / "s2-train.jsonl").read_bytes()
    assert (tmp_path / "s1-test.jsonl").read_bytes() == (tmp_path / "s2-test.jsonl").read_bytes()

    # identical seeds -> byte-identical grid CSVs (single-cell grid)
    spec = benchmark_spec(
        benchmark_files, methods=("blank",), fractions=(1.0,), seeds=(0,),
        embed_config=SkipGramConfig(dim=16, epochs=4, learning_rate=0.08),
        train_config=TrainConfig(iterations=10, dropout=0.1),
        source_gate=0.0,
    )
    harness.emit_reports(harness.run_grid(spec), tmp_path / "g1")
    harness.emit_reports(harness.run_grid(spec), tmp_path / "g2")
    assert (tmp_path / "g1" / "overall_metrics.csv").read_bytes() == \
        (tmp_path / "g2" / "overall_metrics.csv").read_bytes()
    assert (tmp_path / "g1" / "curve.json").read_bytes() == \
        (tmp_path / "g2" / "curve.json").read_bytes()

    # save/load round-trips are identities
    emb_path = tmp_path / "table.bin"
    save_embeddings(small_table, emb_path)
    assert load_embeddings(emb_path).vectors.tobytes() == small_table.vectors.tobytes()

    raw = corpus.load_raw_corpus(benchmark_files / "raw.txt")[:80]
    enc, _ = pretrain_contextual(raw, small_table, PretrainConfig(epochs=2, depth=2, seed=0))
    enc_path = tmp_path / "enc.bin"
    save_encoder(enc, enc_path)
    tokens = corpus.tokenize("aspirin for migraine")
    assert np.array_equal(
        load_encoder(enc_path).encode(small_table, tokens), enc.encode(small_table, tokens)
    )

    assert predict(load_model(p1), clean_memorization_set) == predict(m1, clean_memorization_set)

    ds = clean_memorization_set
    for fmt in ("jsonl", "conll"):
        path = tmp_path / f"round.{fmt}"
        corpus.save_documents(ds, path, fmt)
        assert corpus.load_documents(path, fmt, label_set=ds.label_set) == ds
    ok(9, "models, splits, and grid CSVs byte-identical under fixed seeds; all "
          "save/load and export/import round-trips are identities")


def test_criterion_10_service_contract(tmp_path):
    store = AnnotationStore(tmp_path / "store")
    app = create_app(store)
    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started and time.time() < deadline:
        time.sleep(0.02)
    assert server.started
    port = server.servers[0].sockets[0].getsockname()[1]
    base = f"http://127.0.0.1:{port}"
    try:
        with httpx.Client(base_url=base, timeout=30) as c:
            project = c.post("/projects", json={"name": "acceptance"}).json()
            record = c.post(
                f"/projects/{project['id']}/documents",
                json={"files": [{"name": "a.txt", "text": "patient reported fever today"}]},
            ).json()["records"][0]

            # suggest before any training is a prescribed, actionable error
            resp = c.post(f"/documents/{record['id']}/suggest")
            assert resp.status_code == 400
            assert resp.json()["code"] == "no-model"
            assert "train" in resp.json()["message"]

            # reviewed unreachable before annotated (status machine gate)
            resp = c.post(f"/documents/{record['id']}/status", json={"status": "reviewed"})
            assert resp.status_code == 400

        # 32 concurrent conflicting saves: exactly one winner per revision
        def contend(i):
            with httpx.Client(base_url=base, timeout=30) as c:
                return c.put(
                    f"/documents/{record['id']}/spans",
                    json={"spans": [{"start": 17, "end": 22, "label": "SYMPTOM"}],
                          "revision": 0, "editor": f"w{i}"},
                ).status_code

        with ThreadPoolExecutor(max_workers=32) as pool:
            codes = list(pool.map(contend, range(32)))
        assert codes.count(200) == 1
        assert codes.count(409) == 31

        with httpx.Client(base_url=base, timeout=30) as c:
            doc = c.get(f"/documents/{record['id']}").json()
            assert doc["revision"] == 1 and doc["status"] == "annotated"
            resp = c.post(f"/documents/{record['id']}/status", json={"status": "reviewed"})
            assert resp.json()["status"] == "reviewed"
    finally:
        server.should_exit = True
        thread.join(timeout=5)
    ok(10, "32-way save contention had exactly 1 winner; review gated on annotated; "
           "suggest-before-train returns the prescribed error")
