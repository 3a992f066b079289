import pytest

from nerlab import embeddings, synth
from nerlab.corpus import Dataset


@pytest.fixture(scope="session")
def small_corpus():
    """60 annotated target-domain docs plus 100 extra raw sentences."""
    raw, dataset = synth.generate_synthetic_corpus(
        synth.SynthSpec(n_docs=60, seed=7, extra_raw=100)
    )
    return raw, dataset


@pytest.fixture(scope="session")
def small_table(small_corpus):
    raw, _ = small_corpus
    return embeddings.train_static_embeddings(
        raw, embeddings.SkipGramConfig(dim=16, epochs=3, seed=1)
    )


@pytest.fixture(scope="session")
def clean_memorization_set():
    """20 docs avoiding the deliberately ambiguous vocabulary, so a
    context-free model can in principle fit them perfectly."""
    banned = {"cold", "discharge", "depression", "anxiety", "insomnia",
              "vertigo", "iron", "vitamin", "folic", "calcium"}
    docs = []
    seed = 0
    while len(docs) < 20:
        _, ds = synth.generate_synthetic_corpus(synth.SynthSpec(n_docs=40, seed=seed))
        for doc in ds:
            words = {t.text.lower() for t in doc.tokens}
            if not words & banned and doc.spans:
                docs.append(doc)
                if len(docs) == 20:
                    break
        seed += 1
    renamed = [
        type(doc)(f"mem-{i:03d}", doc.text, doc.tokens, doc.spans)
        for i, doc in enumerate(docs)
    ]
    return Dataset(tuple(renamed), ds.label_set)
