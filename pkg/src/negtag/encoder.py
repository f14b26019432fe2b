"""Shared hierarchical encoder: character BiLSTM per word, word BiLSTM per sentence."""
from __future__ import annotations

import enum
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .data import Sentence, Vocab
from .errors import ConfigError


class Variant(str, enum.Enum):
    INDEPENDENT_NER = "independent-ner"
    INDEPENDENT_NEGATION = "independent-negation"
    TWO = "two"
    SHARED = "shared"
    CONDITIONAL = "conditional"

    @property
    def tasks(self) -> tuple[str, ...]:
        if self is Variant.INDEPENDENT_NER:
            return ("entity",)
        if self is Variant.INDEPENDENT_NEGATION:
            return ("negation",)
        return ("entity", "negation")

    @property
    def code(self) -> int:
        return list(Variant).index(self)

    @classmethod
    def from_code(cls, code: int) -> "Variant":
        return list(Variant)[code]

    @classmethod
    def parse(cls, name: str) -> "Variant":
        aliases = {"independent": "independent-ner", "two-decoder": "two", "shared-decoder": "shared"}
        try:
            return cls(aliases.get(name, name))
        except ValueError:
            choices = ", ".join(v.value for v in cls)
            raise ConfigError(f"unknown variant {name!r}; choose from {choices}") from None


@dataclass
class ModelConfig:
    word_emb_dim: int = 100
    char_emb_dim: int = 25
    tag_emb_dim: int = 50
    char_hidden: int = 50
    word_hidden: int = 100
    tagger_hidden: int = 50
    dropout_rate: float = 0.5
    variant: Variant = Variant.CONDITIONAL
    # per-site dropout toggles
    dropout_char: bool = True
    dropout_input: bool = True
    dropout_encoder: bool = True
    dropout_tagger: bool = True
    heads_on_encoder: bool = False
    stop_gradient: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        if isinstance(self.variant, str):
            self.variant = Variant.parse(self.variant)
        for name in ("word_emb_dim", "char_emb_dim", "tag_emb_dim", "char_hidden", "word_hidden", "tagger_hidden"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["variant"] = self.variant.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    @property
    def encoder_dim(self) -> int:
        return 2 * self.word_hidden


@dataclass
class Batch:
    """Padded index arrays for a list of sentences.

    Characters are encoded once per distinct surface form in the batch;
    ``word_rows[b, t]`` points at the row of that form.
    """

    sentences: Sequence[Sentence]
    word_ids: np.ndarray  # [B, T]
    mask: np.ndarray  # [B, T]
    char_ids: np.ndarray  # [N, L]
    char_mask: np.ndarray  # [N, L]
    word_rows: np.ndarray  # [B, T]
    entity_gold: np.ndarray  # [B, T]
    negation_gold: np.ndarray  # [B, T]

    @property
    def size(self) -> int:
        return self.word_ids.shape[0]

    @property
    def max_len(self) -> int:
        return self.word_ids.shape[1]

    @property
    def lengths(self) -> list[int]:
        return [len(s) for s in self.sentences]


def make_batch(sentences: Sequence[Sentence], vocab: Vocab, dtype=np.float64) -> Batch:
    B = len(sentences)
    T = max(len(s) for s in sentences)
    word_ids = np.zeros((B, T), dtype=np.int64)
    mask = np.zeros((B, T), dtype=dtype)
    word_rows = np.zeros((B, T), dtype=np.int64)
    ent = np.zeros((B, T), dtype=np.int64)
    neg = np.zeros((B, T), dtype=np.int64)
    forms: dict[str, int] = {}
    for b, s in enumerate(sentences):
        n = len(s)
        mask[b, :n] = 1.0
        for t, tok in enumerate(s.tokens):
            word_ids[b, t] = vocab.word_id(tok)
            word_rows[b, t] = forms.setdefault(tok, len(forms))
        if s.entity_tags is not None:
            ent[b, :n] = [vocab.entity_tag_to_id[x] for x in s.entity_tags]
        if s.negation_tags is not None:
            neg[b, :n] = [vocab.negation_tag_to_id[x] for x in s.negation_tags]
    L = max(len(f) for f in forms)
    char_ids = np.zeros((len(forms), L), dtype=np.int64)
    char_mask = np.zeros((len(forms), L), dtype=dtype)
    for form, row in forms.items():
        char_ids[row, : len(form)] = vocab.char_ids(form)
        char_mask[row, : len(form)] = 1.0
    return Batch(sentences, word_ids, mask, char_ids, char_mask, word_rows, ent, neg)


@dataclass
class EncodedSentence:
    """Encoder outputs for a batch, stacked time-major.

    ``output`` is o with shape [T, B, 2*word_hidden], ``char_vectors`` is
    h_c gathered per position [T, B, 2*char_hidden], and ``inputs`` is m
    [T, B, 2*char_hidden + word_emb_dim].
    """

    output: Tensor
    char_vectors: Tensor
    inputs: Tensor

    def __len__(self) -> int:
        return self.output.shape[0]

    @property
    def states(self) -> list[Tensor]:
        return [ag.take(self.output, t) for t in range(len(self))]


def init_encoder_params(cfg: ModelConfig, vocab: Vocab, rng: np.random.Generator) -> dict[str, Tensor]:
    dt = cfg.np_dtype
    p: dict[str, Tensor] = {}
    p["char_emb"] = ag.parameter("char_emb", ag.glorot(rng, (vocab.n_chars, cfg.char_emb_dim), dt))
    p["word_emb"] = ag.parameter("word_emb", ag.glorot(rng, (vocab.n_words, cfg.word_emb_dim), dt))
    for direction in ("fwd", "bwd"):
        p.update(ag.init_lstm(rng, f"char_lstm.{direction}", cfg.char_emb_dim, cfg.char_hidden, dt))
    word_in = 2 * cfg.char_hidden + cfg.word_emb_dim
    for direction in ("fwd", "bwd"):
        p.update(ag.init_lstm(rng, f"word_lstm.{direction}", word_in, cfg.word_hidden, dt))
    return p


def char_encode_batch(params, char_ids: np.ndarray, char_mask: np.ndarray) -> Tensor:
    """[N, 2*char_hidden] for N padded words.

    The forward half is the state after the last real character; the
    backward half is the backward LSTM's state after consuming the first
    character. Right padding is skipped by masking.
    """
    xs = ag.embed(params["char_emb"], char_ids.T)  # [L, N, dc]
    mask = char_mask.T
    fwd = ag.lstm_sequence(ag.lstm_params(params, "char_lstm.fwd"), xs, mask)
    bwd = ag.lstm_sequence(ag.lstm_params(params, "char_lstm.bwd"), xs, mask, reverse=True)
    return ag.concat([ag.take(fwd, xs.shape[0] - 1), ag.take(bwd, 0)])


def char_encode(word: str, params, vocab: Vocab) -> Tensor:
    """Character representation of a single word, shape [2*char_hidden]."""
    if not word:
        raise ConfigError("cannot encode an empty word")
    dt = params["char_emb"].dtype
    ids = np.array([vocab.char_ids(word)], dtype=np.int64)
    hc = char_encode_batch(params, ids, np.ones(ids.shape, dtype=dt))
    return ag.take(hc, 0)


def encode(batch: Batch, model, train: bool = False) -> EncodedSentence:
    """Run the shared encoder; dropout sites follow the model config in train mode."""
    cfg: ModelConfig = model.config
    params = model.params
    rate, rng = cfg.dropout_rate, model.rng
    hc = char_encode_batch(params, batch.char_ids, batch.char_mask)
    if cfg.dropout_char:
        hc = ag.dropout(hc, rate, train, rng)
    hc_t = ag.gather_rows(hc, batch.word_rows.T)  # [T, B, 2c]
    w_t = ag.embed(params["word_emb"], batch.word_ids.T)
    m = ag.concat([hc_t, w_t])
    if cfg.dropout_input:
        m = ag.dropout(m, rate, train, rng)
    fwd = ag.lstm_sequence(ag.lstm_params(params, "word_lstm.fwd"), m)
    bwd = ag.lstm_sequence(ag.lstm_params(params, "word_lstm.bwd"), m, batch.mask.T, reverse=True)
    o = ag.concat([fwd, bwd])
    if cfg.dropout_encoder:
        o = ag.dropout(o, rate, train, rng)
    return EncodedSentence(o, hc_t, m)
