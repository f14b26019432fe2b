"""Seeded generator for clinical-style sentences with entity and negation tags.

Sentences are built from clause templates. Every clause that mentions a
PROBLEM comes as an (affirmed, negated) pair with the same slots; whether a
clause is negated is a Bernoulli draw at ``negation_rate``, so the fraction
of negated PROBLEM spans tracks the configured rate. Negation cues also
appear in front of TEST and TREATMENT mentions, but only PROBLEM spans are
ever tagged as negated.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

from .data import Dataset, Sentence
from .errors import UsageError

PROBLEMS = [
    "chest pain", "shortness of breath", "fever", "nausea", "vomiting", "headache",
    "abdominal pain", "pneumonia", "cough", "dizziness", "rash", "edema",
    "lower extremity edema", "hypertension", "diabetes", "fracture", "hematuria", "syncope",
    "palpitations", "fatigue", "chills", "diarrhea", "constipation", "back pain",
    "weight loss", "night sweats", "dysuria", "wheezing", "pleural effusion",
    "deep vein thrombosis", "pulmonary embolism", "myocardial infarction",
    "atrial fibrillation", "acute renal failure", "urinary tract infection", "anemia",
    "sepsis", "seizure", "stroke", "confusion", "melena", "hemoptysis", "jaundice",
    "ascites", "cellulitis", "lymphadenopathy", "tachycardia", "bradycardia", "hypotension",
    "focal weakness", "numbness", "blurred vision", "sore throat", "joint swelling",
    "pericardial effusion", "pneumothorax", "bowel obstruction", "gi bleed", "sob", "cp",
    "dvt", "uti", "afib", "chf exacerbation", "copd flare", "calf tenderness",
    "neck stiffness", "photophobia", "orthopnea", "hepatomegaly",
]

TESTS = [
    "chest x-ray", "ct scan", "ct of the abdomen", "mri of the brain", "ekg",
    "echocardiogram", "cbc", "blood cultures", "urinalysis", "troponin", "bmp", "lfts",
    "ultrasound", "abdominal ultrasound", "chest ct", "lipase", "inr", "hemoglobin a1c",
    "lumbar puncture", "stress test", "colonoscopy", "biopsy", "arterial blood gas",
    "d-dimer", "tsh", "urine culture", "head ct", "cardiac catheterization", "eeg",
    "pulmonary function tests", "cxr", "ua",
]

TREATMENTS = [
    "aspirin", "tylenol", "tylenol 325 mg", "abraxane", "calcium carbonate",
    "colecalciferol 1,000 units po", "lisinopril", "metoprolol", "heparin", "warfarin",
    "insulin", "antibiotics", "vancomycin", "ceftriaxone", "albuterol", "prednisone",
    "furosemide", "lasix 40 mg", "morphine", "oxycodone", "ibuprofen", "nitroglycerin",
    "iv fluids", "physical therapy", "appendectomy", "intubation", "dialysis",
    "blood transfusion", "chemotherapy", "radiation therapy", "atorvastatin", "metformin",
    "omeprazole", "zofran", "potassium chloride", "amoxicillin", "levofloxacin",
    "supplemental oxygen", "coumadin", "aspirin 81 mg",
]

# {P}: problem slot, {T}: test slot, {X}: treatment slot.
PROBLEM_CLAUSES = [
    ("patient reports {P}", "patient denies {P}"),
    ("complains of {P}", "denies any {P}"),
    ("positive for {P}", "negative for {P}"),
    ("there is evidence of {P}", "no evidence of {P}"),
    ("{P} was noted", "{P} was ruled out"),
    ("{P} is present", "{P} is absent"),
    ("{T} showed {P}", "{T} showed no {P}"),
    ("{T} was significant for {P}", "{T} was negative for {P}"),
    ("admitted with {P} and {P}", "no {P} or {P}"),
    ("history of {P}", "no history of {P}"),
    ("found to have {P}", "without {P}"),
    ("continues to have {P}", "no longer has {P}"),
    ("reports {P} , {P} , and {P}", "denies {P} , {P} , or {P}"),
    (
        "patient reports several days of worsening {P}",
        "patient denies having experienced any recent episodes of worsening {P}",
    ),
    ("no improvement in {P}", "no signs of {P}"),
    ("no change in {P} since admission", "free of {P} since admission"),
    ("did not tolerate {X} due to {P}", "tolerated {X} without {P}"),
    ("not taking {X} for {P}", "taking {X} , no {P}"),
    ("{X} was given for {P}", "{X} was given and there was no {P}"),
    ("{P} not improved after {X}", "{X} stopped and {P} was not seen"),
    ("still has {P} despite {X}", "{P} unlikely given normal {T}"),
]

OTHER_CLAUSES = [
    "started on {X}", "continue {X}", "discontinue {X}", "not taking {X}",
    "stopped taking {X}", "patient denies taking {X}", "{X} was held", "no {X} given",
    "{T} was ordered", "{T} pending", "{T} was not performed", "refused {X}",
    "recommend {T}", "{T} within normal limits", "will follow up {T} results",
    "plan to start {X}", "did not receive {X}", "declined {T}", "never took {X}",
]

PREFIXES = ["", "", "", "on exam ,", "today", "per family ,", "at baseline ,", "overnight ,"]
JOINERS = [",", "and", "but", ";", "."]

ABBREVIATIONS = {
    "patient": "pt",
    "without": "w/o",
    "negative": "neg",
    "history": "hx",
    "complains": "c/o",
    "evidence": "evid",
}


@dataclass(frozen=True)
class SynthConfig:
    negation_rate: float = 0.3
    """Probability that a PROBLEM clause uses its negated form."""
    noise_rate: float = 0.03
    """Per-token probability of a character-level misspelling."""
    abbrev_rate: float = 0.15
    """Probability of replacing a word with its clinical abbreviation."""
    problem_clause_rate: float = 0.7
    max_clauses: int = 3
    capitalize_rate: float = 0.5


def _misspell(rng: random.Random, tok: str) -> str:
    if len(tok) < 4 or not tok.isalpha():
        return tok
    i = rng.randrange(1, len(tok) - 1)
    kind = rng.randrange(3)
    if kind == 0:
        return tok[:i] + tok[i + 1] + tok[i] + tok[i + 2 :]
    if kind == 1:
        return tok[:i] + tok[i + 1 :]
    return tok[:i] + tok[i] + tok[i:]


class _Builder:
    def __init__(self, rng: random.Random, cfg: SynthConfig):
        self.rng = rng
        self.cfg = cfg
        self.tokens: list[str] = []
        self.ents: list[str] = []
        self.negs: list[str] = []

    def word(self, tok: str) -> None:
        rng, cfg = self.rng, self.cfg
        if tok in ABBREVIATIONS and rng.random() < cfg.abbrev_rate:
            tok = ABBREVIATIONS[tok]
        elif rng.random() < cfg.noise_rate:
            tok = _misspell(rng, tok)
        self.tokens.append(tok)
        self.ents.append("O")
        self.negs.append("O")

    def mention(self, phrase: str, etype: str, negated: bool) -> None:
        for k, tok in enumerate(phrase.split()):
            if self.rng.random() < self.cfg.noise_rate:
                tok = _misspell(self.rng, tok)
            prefix = "B" if k == 0 else "I"
            self.tokens.append(tok)
            self.ents.append(f"{prefix}-{etype}")
            self.negs.append(f"{prefix}-NEG" if negated else "O")

    def clause(self, template: str, negated: bool) -> None:
        for piece in template.split():
            if piece == "{P}":
                self.mention(self.rng.choice(PROBLEMS), "PROBLEM", negated)
            elif piece == "{T}":
                self.mention(self.rng.choice(TESTS), "TEST", False)
            elif piece == "{X}":
                self.mention(self.rng.choice(TREATMENTS), "TREATMENT", False)
            else:
                self.word(piece)


def _sentence(rng: random.Random, cfg: SynthConfig) -> Sentence:
    b = _Builder(rng, cfg)
    prefix = rng.choice(PREFIXES)
    for tok in prefix.split():
        b.word(tok)
    n_clauses = rng.randint(1, cfg.max_clauses)
    for k in range(n_clauses):
        if k > 0:
            b.word(rng.choice(JOINERS))
        if rng.random() < cfg.problem_clause_rate:
            affirmed, negated_form = rng.choice(PROBLEM_CLAUSES)
            negated = rng.random() < cfg.negation_rate
            b.clause(negated_form if negated else affirmed, negated)
        else:
            b.clause(rng.choice(OTHER_CLAUSES), False)
    b.word(".")
    if rng.random() < cfg.capitalize_rate and b.tokens[0][:1].isalpha():
        b.tokens[0] = b.tokens[0][0].upper() + b.tokens[0][1:]
    return Sentence(b.tokens, b.ents, b.negs)


def synth_generate(seed: int, n_sentences: int, config: SynthConfig | None = None, split: str = "train") -> Dataset:
    """Generate ``n_sentences`` sentences; a pure function of its arguments."""
    if n_sentences < 1:
        raise UsageError(f"n_sentences must be >= 1, got {n_sentences}")
    cfg = config or SynthConfig()
    rng = random.Random(f"negtag-synth:{seed}")
    return Dataset([_sentence(rng, cfg) for _ in range(n_sentences)], split)


def split_sizes(n: int, split: tuple[int, int, int]) -> tuple[int, int, int]:
    """Train/dev/test sizes for percentages ``split``; dev takes the rounding remainder."""
    total = sum(split)
    n_train = n * split[0] // total
    n_test = n * split[2] // total
    return n_train, n - n_train - n_test, n_test


def generate_splits(
    seed: int, n: int, split: tuple[int, int, int] = (80, 10, 10), config: SynthConfig | None = None
) -> dict[str, Dataset]:
    """Train/dev/test corpora, each from its own derived seed."""
    sizes = dict(zip(("train", "dev", "test"), split_sizes(n, split)))
    out = {}
    for k, (name, size) in enumerate(sizes.items()):
        if size == 0:
            out[name] = Dataset([], name)
            continue
        out[name] = synth_generate(seed * 1000 + k, size, config, split=name)
    return out
