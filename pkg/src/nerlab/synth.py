"""Deterministic synthetic pseudo-clinical corpus with known span annotations.

Two domains share most of their vocabulary: "target" sentences carry the full
four-label annotation set, "source" sentences only CHEMICAL and DISEASE, which
makes the source corpus a stand-in for an overlapping-label base model's
training data.

The templates deliberately plant ambiguity that a context-free tagger cannot
resolve: words labeled DISEASE in one sentence frame and SYMPTOM in another,
entity words reused in unlabeled phrases ("cold compress", "discharge
summary"), and entity prefixes whose final span length and label depend on the
following tokens ("iron" vs "iron deficiency anemia").
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Mapping

from .corpus import Dataset, Document, EntitySpan

TARGET_LABELS = ("CHEMICAL", "DISEASE", "SYMPTOM", "DOSAGE")
SOURCE_LABELS = ("CHEMICAL", "DISEASE")

# Head entries are drawn far more often than the generated tail, so a partial
# training set reliably misses tail words while the raw corpus still mentions
# them a handful of times.
_CHEM_STEMS = ["zal", "vor", "mek", "tra", "bex", "dol", "fena", "gli",
               "ket", "lam", "nor", "pex", "quin", "rit", "sul", "tev"]
_CHEM_ENDS = ["prexol", "miline", "tazide", "naxib", "volan", "certan"]

CHEMICALS = [
    "aspirin", "ibuprofen", "paracetamol", "amoxicillin", "metformin",
    "lisinopril", "atorvastatin", "omeprazole", "simvastatin", "levothyroxine",
    "azithromycin", "ciprofloxacin", "doxycycline", "prednisone", "insulin",
    "warfarin", "clopidogrel", "losartan", "gabapentin", "sertraline",
    "fluoxetine", "citalopram", "tramadol", "codeine", "morphine",
    "naproxen", "diclofenac", "cetirizine", "loratadine", "ranitidine",
    "furosemide", "amlodipine", "metoprolol", "propranolol", "enalapril",
    "ramipril", "salbutamol", "montelukast", "diazepam", "nifedipine",
    "calcium carbonate", "magnesium sulfate", "ferrous sulfate", "zinc oxide",
] + [stem + end for stem in _CHEM_STEMS for end in _CHEM_ENDS[:4]]

_DIS_STEMS = ["adren", "bronch", "cardi", "derm", "enter", "gastr", "hepat",
              "my", "nephr", "neur", "oste", "pancre", "phleb", "rhin"]
_DIS_ENDS = ["opathy", "itis", "osis"]

DISEASES = [
    "diabetes", "hypertension", "asthma", "pneumonia", "bronchitis",
    "migraine", "arthritis", "eczema", "psoriasis", "anemia",
    "gastritis", "hepatitis", "influenza", "sinusitis", "tonsillitis",
    "dermatitis", "colitis", "nephritis", "cystitis", "meningitis",
    "epilepsy", "glaucoma", "osteoporosis", "hypothyroidism", "angina",
    "gout", "shingles", "malaria", "renal failure", "heart failure",
    "atrial fibrillation", "peptic ulcer", "chronic fatigue syndrome",
] + [stem + end for stem in _DIS_STEMS for end in _DIS_ENDS]

SYMPTOMS = [
    "fever", "nausea", "headache", "dizziness", "fatigue",
    "cough", "vomiting", "rash", "itching", "swelling",
    "chills", "sweating", "drowsiness", "palpitations", "wheezing",
    "cramps", "bloating", "constipation", "diarrhea", "heartburn",
    "numbness", "tingling", "stiffness", "soreness", "tremor",
    "confusion", "weakness", "hoarseness", "breathlessness", "bruising",
]

# Words that are DISEASE in diagnosis frames but SYMPTOM in complaint frames.
AMBIGUOUS_DS = ["depression", "anxiety", "insomnia", "vertigo"]

DOSE_AMOUNTS = ["5", "10", "20", "25", "40", "50", "75", "100", "150", "200",
                "250", "300", "400", "500", "600", "800", "1000"]
DOSE_UNITS = ["mg", "ml", "mcg", "units"]
DOSE_PHRASES = ["two tablets", "one capsule", "three drops", "one sachet"]

# Prefix traps: the CHEMICAL reading stops after the head word(s); the DISEASE
# reading extends the same prefix with "deficiency ...".
PREFIX_CHEMS = ["iron", "vitamin d", "folic acid", "calcium"]
PREFIX_DISEASES = [
    "iron deficiency anemia", "vitamin d deficiency",
    "folic acid deficiency", "calcium deficiency",
]

TIMES = ["yesterday", "last week", "two days ago", "this morning",
         "on admission", "after lunch", "overnight", "last month"]
BODY_PARTS = ["chest", "abdomen", "left arm", "right leg", "throat",
              "lower back", "left ear", "scalp"]


# Each template is (weight, sentence frame). Slots in braces draw from the
# matching pool; CAPITALIZED slots become annotated spans with that label suffix
# stripped of any trailing digit disambiguator.
_TARGET_TEMPLATES: list[tuple[int, str]] = [
    (10, "The patient was prescribed {CHEMICAL} {DOSAGE} for {DISEASE}."),
    (6, "He was started on {CHEMICAL} {DOSAGE} {time}."),
    (8, "She complained of {SYMPTOM} and {SYMPTOM} {time}."),
    (5, "The patient reported {SYMPTOM@amb} and {SYMPTOM} {time}."),
    (5, "There is a history of {DISEASE@amb} in the family."),
    (8, "He was diagnosed with {DISEASE} {time}."),
    (5, "Examination of the {body} showed {SYMPTOM}."),
    (5, "{CHEMICAL} was discontinued because of {SYMPTOM}."),
    (4, "Treatment with {CHEMICAL} improved the {DISEASE}."),
    (4, "The patient denied any {SYMPTOM} or {SYMPTOM}."),
    (5, "He takes {CHEMICAL@prefix} {DOSAGE} every morning."),
    (5, "Laboratory work revealed {DISEASE@prefix}."),
    (4, "She was diagnosed with {DISEASE@trap} {time}."),
    (4, "A cold compress was applied to the {body}."),
    (4, "She reported thick {SYMPTOM@trap} from the {body}."),
    (4, "The discharge summary was sent to the clinic."),
    (2, "Vital signs were stable during the visit."),
    (2, "Follow up was scheduled for next month."),
    (3, "He denied taking {CHEMICAL} with {CHEMICAL}."),
    (6, "Her {DISEASE} was managed with {CHEMICAL} {DOSAGE}."),
]

_SOURCE_TEMPLATES: list[tuple[int, str]] = [
    (8, "Treatment with {CHEMICAL} reduced the incidence of {DISEASE}."),
    (5, "Cases of {DISEASE} were linked to {CHEMICAL} exposure."),
    (8, "{CHEMICAL} is indicated for the management of {DISEASE}."),
    (5, "Patients receiving {CHEMICAL} developed {DISEASE} less often."),
    (5, "A trial of {CHEMICAL} in {DISEASE} was completed."),
    (4, "There is a history of {DISEASE@amb} in the cohort."),
    (4, "Laboratory screening revealed {DISEASE@prefix} in several subjects."),
    (3, "The committee reviewed adverse events {time}."),
    (4, "{CHEMICAL} was well tolerated in the study."),
    (4, "Screening for {DISEASE} continued {time}."),
    (4, "He takes {CHEMICAL@prefix} every morning."),
]


@dataclass(frozen=True)
class SynthSpec:
    """Request for a generated corpus.

    When `label_targets` is given, documents are emitted until every listed
    label reaches its requested span count (n_docs is then ignored); counts can
    overshoot by at most the per-sentence granularity of the templates.
    """

    n_docs: int = 200
    seed: int = 0
    domain: str = "target"
    extra_raw: int = 0
    label_targets: Mapping[str, int] | None = None

    def __post_init__(self) -> None:
        if self.domain not in ("target", "source"):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.label_targets is None and self.n_docs < 1:
            raise ValueError("spec must request at least one document")


def _tiered(pool: list[str], rng: random.Random, head: int = 24) -> str:
    """Zipf-flavored draw: the head of the pool covers ~70% of mentions, the
    generated tail stays rare."""
    if len(pool) <= head or rng.random() < 0.7:
        return rng.choice(pool[:head])
    return rng.choice(pool[head:])


def _fill_slot(slot: str, rng: random.Random) -> tuple[str, str | None]:
    """Return (surface text, label or None) for a template slot."""
    if "@" in slot:
        label, variant = slot.split("@", 1)
    else:
        label, variant = slot, ""
    if label == "time":
        return rng.choice(TIMES), None
    if label == "body":
        return rng.choice(BODY_PARTS), None
    if label == "CHEMICAL":
        if variant == "prefix":
            return rng.choice(PREFIX_CHEMS), "CHEMICAL"
        return _tiered(CHEMICALS, rng), "CHEMICAL"
    if label == "DISEASE":
        if variant == "amb":
            return rng.choice(AMBIGUOUS_DS), "DISEASE"
        if variant == "prefix":
            return rng.choice(PREFIX_DISEASES), "DISEASE"
        if variant == "trap":
            return "cold", "DISEASE"
        return _tiered(DISEASES, rng), "DISEASE"
    if label == "SYMPTOM":
        if variant == "amb":
            return rng.choice(AMBIGUOUS_DS), "SYMPTOM"
        if variant == "trap":
            return "discharge", "SYMPTOM"
        return rng.choice(SYMPTOMS), "SYMPTOM"
    if label == "DOSAGE":
        if rng.random() < 0.8:
            return f"{rng.choice(DOSE_AMOUNTS)} {rng.choice(DOSE_UNITS)}", "DOSAGE"
        return rng.choice(DOSE_PHRASES), "DOSAGE"
    raise ValueError(f"unknown template slot {slot!r}")


def _render(template: str, rng: random.Random) -> tuple[str, list[EntitySpan]]:
    text: list[str] = []
    spans: list[EntitySpan] = []
    pos = 0
    cursor = 0
    while True:
        open_brace = template.find("{", cursor)
        if open_brace < 0:
            literal = template[cursor:]
            text.append(literal)
            break
        close_brace = template.index("}", open_brace)
        literal = template[cursor:open_brace]
        text.append(literal)
        pos += len(literal)
        surface, label = _fill_slot(template[open_brace + 1 : close_brace], rng)
        if label is not None:
            spans.append(EntitySpan(pos, pos + len(surface), label))
        text.append(surface)
        pos += len(surface)
        cursor = close_brace + 1
    return "".join(text), spans


def _slot_labels(template: str) -> list[str]:
    labels = []
    cursor = 0
    while True:
        open_brace = template.find("{", cursor)
        if open_brace < 0:
            return labels
        close_brace = template.index("}", open_brace)
        slot = template[open_brace + 1 : close_brace].split("@", 1)[0]
        if slot.isupper():
            labels.append(slot)
        cursor = close_brace + 1


def _pick_template(
    templates: list[tuple[int, str]],
    rng: random.Random,
    unmet: set[str] | None = None,
) -> str:
    """Weighted draw; when chasing label targets, prefer templates whose
    entity slots all still need counts, falling back to partial overlap."""
    pool = templates
    if unmet:
        full = [(w, t) for w, t in templates if set(_slot_labels(t)) and set(_slot_labels(t)) <= unmet]
        partial = [(w, t) for w, t in templates if set(_slot_labels(t)) & unmet]
        pool = full or partial or templates
    total = sum(w for w, _ in pool)
    roll = rng.random() * total
    for weight, template in pool:
        roll -= weight
        if roll < 0:
            return template
    return pool[-1][1]


def generate_synthetic_corpus(spec: SynthSpec) -> tuple[list[str], Dataset]:
    """Generate (raw sentence corpus, annotated dataset) for `spec`.

    The raw corpus contains every annotated document's text followed by
    `spec.extra_raw` additional unannotated sentences from the same template
    distribution, so pretraining sees the full sentence-frame inventory.
    Deterministic for a fixed spec.
    """
    rng = random.Random(spec.seed)
    templates = _TARGET_TEMPLATES if spec.domain == "target" else _SOURCE_TEMPLATES
    labels = TARGET_LABELS if spec.domain == "target" else SOURCE_LABELS

    documents: list[Document] = []
    counts = {label: 0 for label in labels}
    raw: list[str] = []

    def done() -> bool:
        if spec.label_targets is not None:
            return all(counts.get(k, 0) >= v for k, v in spec.label_targets.items())
        return len(documents) >= spec.n_docs

    while not done():
        unmet = None
        if spec.label_targets is not None:
            unmet = {k for k, v in spec.label_targets.items() if counts.get(k, 0) < v}
        text, spans = _render(_pick_template(templates, rng, unmet), rng)
        doc = Document.create(f"{spec.domain}-{len(documents):05d}", text, spans)
        documents.append(doc)
        raw.append(text)
        for span in spans:
            counts[span.label] += 1

    for _ in range(spec.extra_raw):
        text, _ = _render(_pick_template(templates, rng), rng)
        raw.append(text)

    return raw, Dataset(tuple(documents), frozenset(labels))
