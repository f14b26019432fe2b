"""Corpus I/O, vocabularies, subsampling, and pretrained-vector loading.

The corpus format is three tab-separated columns per token (surface form,
entity BIO tag, negation BIO tag) with one blank line between sentences.
"""
from __future__ import annotations

import math
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DataError, UsageError

ENTITY_TYPES = ("PROBLEM", "TEST", "TREATMENT")
ENTITY_TAGS = ("O",) + tuple(f"{p}-{t}" for t in ENTITY_TYPES for p in "BI")
NEGATION_TAGS = ("O", "B-NEG", "I-NEG")
GO = "<GO>"
PAD = "<PAD>"
UNK = "<UNK>"

_TAG_RE = re.compile(r"^(O|[BI]-(PROBLEM|TEST|TREATMENT|NEG))$")


@dataclass
class Sentence:
    tokens: list[str]
    entity_tags: list[str] | None
    negation_tags: list[str] | None

    def __post_init__(self):
        n = len(self.tokens)
        if n == 0:
            raise DataError("empty sentence")
        for column in (self.entity_tags, self.negation_tags):
            if column is not None and len(column) != n:
                raise DataError(f"ragged sentence: {n} tokens but {len(column)} tags")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class Dataset:
    sentences: list[Sentence]
    split: str = "train"

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self) -> Iterator[Sentence]:
        return iter(self.sentences)

    def __getitem__(self, i):
        return self.sentences[i]


# -- file format ----------------------------------------------------------------------------


def _check_tag(tag: str, column: int, path, lineno: int) -> None:
    if not _TAG_RE.match(tag):
        raise DataError(f"unknown tag {tag!r} in column {column}", path, lineno)
    is_neg = tag.endswith("-NEG")
    if column == 2 and is_neg:
        raise DataError("NEG tag in the entity column", path, lineno)
    if column == 3 and tag != "O" and not is_neg:
        raise DataError(f"entity tag {tag!r} in the negation column", path, lineno)


def parse_conll(text: str, path=None, split: str = "train") -> Dataset:
    sentences: list[Sentence] = []
    toks: list[str] = []
    ents: list[str] = []
    negs: list[str] = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            if toks:
                sentences.append(Sentence(toks, ents, negs))
                toks, ents, negs = [], [], []
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise DataError(f"expected 3 tab-separated columns, found {len(cols)}", path, lineno)
        tok, ent, neg = cols
        if not tok:
            raise DataError("empty token", path, lineno)
        _check_tag(ent, 2, path, lineno)
        _check_tag(neg, 3, path, lineno)
        toks.append(tok)
        ents.append(ent)
        negs.append(neg)
    if toks:
        sentences.append(Sentence(toks, ents, negs))
    if not sentences:
        raise DataError("corpus contains no sentences", path)
    return Dataset(sentences, split)


def load_conll(path, split: str | None = None) -> Dataset:
    path = Path(path)
    if split is None:
        split = path.stem if path.stem in ("train", "dev", "test") else "train"
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"not valid UTF-8: {exc}", path) from exc
    return parse_conll(text, path, split)


def format_conll(sentences: Iterable[Sentence]) -> str:
    blocks = []
    for s in sentences:
        blocks.append(
            "\n".join(f"{t}\t{e}\t{n}" for t, e, n in zip(s.tokens, s.entity_tags, s.negation_tags))
        )
    return "\n\n".join(blocks) + "\n"


def write_conll(dataset: Dataset | Sequence[Sentence], path) -> None:
    from .io import atomic_write

    atomic_write(path, format_conll(dataset))


# -- vocabulary -------------------------------------------------------------------------------


class Vocab:
    """Index maps for words, characters, and both tag alphabets.

    Words are lowercased before lookup; characters keep their case. Tag
    maps hold the fixed alphabets with the GO symbol appended last, so the
    softmax over real tags covers ids ``0 .. K-1``.
    """

    PAD_ID = 0
    UNK_ID = 1

    def __init__(self, words: Sequence[str], chars: Sequence[str]):
        self.id_to_word = [PAD, UNK] + [w for w in words if w not in (PAD, UNK)]
        self.id_to_char = [PAD, UNK] + [c for c in chars if c not in (PAD, UNK)]
        self.word_to_id = {w: i for i, w in enumerate(self.id_to_word)}
        self.char_to_id = {c: i for i, c in enumerate(self.id_to_char)}
        if len(self.word_to_id) != len(self.id_to_word) or len(self.char_to_id) != len(self.id_to_char):
            raise DataError("vocabulary entries are not unique")
        self.id_to_entity_tag = list(ENTITY_TAGS) + [GO]
        self.id_to_negation_tag = list(NEGATION_TAGS) + [GO]
        self.entity_tag_to_id = {t: i for i, t in enumerate(self.id_to_entity_tag)}
        self.negation_tag_to_id = {t: i for i, t in enumerate(self.id_to_negation_tag)}

    @property
    def n_words(self) -> int:
        return len(self.id_to_word)

    @property
    def n_chars(self) -> int:
        return len(self.id_to_char)

    @property
    def n_entity_tags(self) -> int:
        """Number of predictable entity tags (GO excluded)."""
        return len(ENTITY_TAGS)

    @property
    def n_negation_tags(self) -> int:
        return len(NEGATION_TAGS)

    @property
    def entity_go(self) -> int:
        return self.entity_tag_to_id[GO]

    @property
    def negation_go(self) -> int:
        return self.negation_tag_to_id[GO]

    def word_id(self, token: str) -> int:
        return self.word_to_id.get(token.lower(), self.UNK_ID)

    def char_ids(self, token: str) -> list[int]:
        return [self.char_to_id.get(ch, self.UNK_ID) for ch in token]

    def to_dict(self) -> dict:
        return {"words": self.id_to_word[2:], "chars": self.id_to_char[2:]}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocab":
        return cls(d["words"], d["chars"])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Vocab)
            and self.id_to_word == other.id_to_word
            and self.id_to_char == other.id_to_char
        )


def build_vocab(train: Dataset, min_word_freq: int = 1) -> Vocab:
    """Word and character maps from the training split only.

    Words are ordered by descending frequency, then alphabetically, so the
    mapping does not depend on sentence order.
    """
    if len(train) == 0:
        raise DataError("cannot build a vocabulary from an empty dataset")
    counts = Counter(tok.lower() for s in train for tok in s.tokens)
    words = sorted((w for w, c in counts.items() if c >= min_word_freq), key=lambda w: (-counts[w], w))
    chars = sorted({ch for s in train for tok in s.tokens for ch in tok})
    return Vocab(words, chars)


def load_embeddings(path, vocab: Vocab, dim: int) -> dict[int, np.ndarray]:
    """Read GloVe-style text vectors for words present in ``vocab``.

    Returns ``{word_id: vector}``; words missing from the file keep their
    random initialisation.
    """
    found: dict[int, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            if len(parts) != dim + 1:
                raise DataError(f"expected {dim} values, found {len(parts) - 1}", path, lineno)
            wid = vocab.word_to_id.get(parts[0].lower())
            if wid is None or wid in found:
                continue
            try:
                found[wid] = np.array([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise DataError(f"bad vector value: {exc}", path, lineno) from exc
    return found


# -- subsampling --------------------------------------------------------------------------------


def subsample(train: Dataset, fraction: float, seed: int) -> Dataset:
    """Uniform sentence sample without replacement, original order kept."""
    if not 0.0 < fraction <= 1.0:
        raise UsageError(f"fraction must be in (0, 1], got {fraction}")
    n = len(train)
    if fraction == 1.0:
        return Dataset(list(train.sentences), train.split)
    k = max(1, int(math.floor(fraction * n + 0.5)))
    picked = sorted(random.Random(seed).sample(range(n), k))
    return Dataset([train.sentences[i] for i in picked], train.split)


@dataclass
class CorpusStats:
    sentences: int = 0
    tokens: int = 0
    entity_spans: dict[str, int] = field(default_factory=dict)
    negated_spans: int = 0

    @property
    def negated_problem_fraction(self) -> float:
        p = self.entity_spans.get("PROBLEM", 0)
        return self.negated_spans / p if p else 0.0


def corpus_stats(dataset: Dataset) -> CorpusStats:
    from .evaluation import tags_to_spans

    stats = CorpusStats(entity_spans={t: 0 for t in ENTITY_TYPES})
    for s in dataset:
        stats.sentences += 1
        stats.tokens += len(s)
        for span in tags_to_spans(s.entity_tags):
            stats.entity_spans[span.label] += 1
        stats.negated_spans += len(tags_to_spans(s.negation_tags))
    return stats
