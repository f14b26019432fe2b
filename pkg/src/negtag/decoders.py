"""Tagging heads over the shared encoding.

All variants decode left to right. Under teacher forcing the previous-tag
inputs are the gold tags; at inference they are the argmax of the previous
step (lowest id wins ties).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .data import Sentence, Vocab
from .encoder import Batch, ModelConfig, Variant, encode, init_encoder_params, make_batch
from .errors import ConfigError


@dataclass
class TaggerState:
    h: dict[str, Tensor]
    c: dict[str, Tensor]
    prev_entity_tag: np.ndarray  # [B]
    prev_negation_tag: np.ndarray  # [B]

    def with_prev(self, entity=None, negation=None) -> "TaggerState":
        return replace(
            self,
            prev_entity_tag=self.prev_entity_tag if entity is None else np.asarray(entity),
            prev_negation_tag=self.prev_negation_tag if negation is None else np.asarray(negation),
        )


def _taggers(cfg: ModelConfig) -> tuple[str, ...]:
    if cfg.heads_on_encoder:
        return ()
    v = cfg.variant
    if v is Variant.INDEPENDENT_NER:
        return ("entity",)
    if v is Variant.INDEPENDENT_NEGATION:
        return ("negation",)
    if v is Variant.TWO:
        return ("entity", "negation")
    return ("shared",)


def head_input_dims(cfg: ModelConfig, n_entity: int) -> dict[str, int]:
    d = cfg.encoder_dim if cfg.heads_on_encoder else cfg.tagger_hidden
    dims = {task: d for task in cfg.variant.tasks}
    if cfg.variant is Variant.CONDITIONAL:
        dims["negation"] = d + n_entity
    return dims


class Model:
    """Parameters, configuration, vocabulary, and dropout RNG of one tagger."""

    def __init__(self, config: ModelConfig, vocab: Vocab, seed: int = 0, params: dict | None = None):
        self.config = config
        self.vocab = vocab
        self.seed = seed
        self.rng = np.random.default_rng(seed + 1)
        self.params = params if params is not None else self._init_params(np.random.default_rng(seed))

    @property
    def variant(self) -> Variant:
        return self.config.variant

    @property
    def tasks(self) -> tuple[str, ...]:
        return self.config.variant.tasks

    def reseed(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def _init_params(self, rng: np.random.Generator) -> dict[str, Tensor]:
        cfg, vocab = self.config, self.vocab
        dt = cfg.np_dtype
        p = init_encoder_params(cfg, vocab, rng)
        n_tags = {"entity": vocab.n_entity_tags, "negation": vocab.n_negation_tags}
        tag_in = {"entity": len(vocab.id_to_entity_tag), "negation": len(vocab.id_to_negation_tag)}
        dims = head_input_dims(cfg, vocab.n_entity_tags)
        taggers = _taggers(cfg)
        if "shared" in taggers:
            for task in ("entity", "negation"):
                name = f"tag_emb.{task}"
                p[name] = ag.parameter(name, ag.glorot(rng, (tag_in[task], cfg.tag_emb_dim), dt))
            p.update(ag.init_lstm(rng, "tagger.shared", cfg.encoder_dim + 2 * cfg.tag_emb_dim, cfg.tagger_hidden, dt))
        for task in cfg.variant.tasks:
            if task in taggers:
                name = f"tag_emb.{task}"
                p[name] = ag.parameter(name, ag.glorot(rng, (tag_in[task], cfg.tag_emb_dim), dt))
                p.update(ag.init_lstm(rng, f"tagger.{task}", cfg.encoder_dim + cfg.tag_emb_dim, cfg.tagger_hidden, dt))
            self._init_head(p, rng, task, n_tags[task], dims[task])
        return p

    @staticmethod
    def _init_head(p, rng, task: str, k: int, d: int) -> None:
        dt = p["char_emb"].dtype
        p[f"head.{task}.W"] = ag.parameter(f"head.{task}.W", ag.glorot(rng, (k, d), dt))
        p[f"head.{task}.b"] = ag.parameter(f"head.{task}.b", np.zeros(k, dtype=dt))

    def num_parameters(self) -> int:
        return int(sum(t.data.size for t in self.params.values()))

    def batch(self, sentences: Sequence[Sentence]) -> Batch:
        return make_batch(sentences, self.vocab, self.config.np_dtype)

    def load_pretrained(self, vectors: dict[int, np.ndarray]) -> int:
        table = self.params["word_emb"].data
        for wid, vec in vectors.items():
            table[wid] = vec
        return len(vectors)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, arr in snap.items():
            self.params[k].data[...] = arr


def count_parameters(cfg: ModelConfig, n_words: int, n_chars: int, n_entity: int = 7, n_negation: int = 3) -> int:
    """Closed-form parameter count for ``cfg``; tag embeddings include the GO row."""

    def lstm(d, h):
        return 4 * h * (d + h + 1)

    total = n_chars * cfg.char_emb_dim + n_words * cfg.word_emb_dim
    total += 2 * lstm(cfg.char_emb_dim, cfg.char_hidden)
    total += 2 * lstm(2 * cfg.char_hidden + cfg.word_emb_dim, cfg.word_hidden)
    n_tags = {"entity": n_entity, "negation": n_negation}
    dims = head_input_dims(cfg, n_entity)
    taggers = _taggers(cfg)
    for task in cfg.variant.tasks:
        total += n_tags[task] * dims[task] + n_tags[task]
        if task in taggers:
            total += (n_tags[task] + 1) * cfg.tag_emb_dim + lstm(cfg.encoder_dim + cfg.tag_emb_dim, cfg.tagger_hidden)
    if "shared" in taggers:
        total += (n_entity + 1 + n_negation + 1) * cfg.tag_emb_dim
        total += lstm(cfg.encoder_dim + 2 * cfg.tag_emb_dim, cfg.tagger_hidden)
    return total


# -- decode steps ---------------------------------------------------------------------------


def initial_state(model: Model, batch_size: int) -> TaggerState:
    dt = model.config.np_dtype
    H = model.config.tagger_hidden
    h = {k: Tensor(np.zeros((batch_size, H), dtype=dt)) for k in _taggers(model.config)}
    c = {k: Tensor(np.zeros((batch_size, H), dtype=dt)) for k in _taggers(model.config)}
    return TaggerState(
        h,
        c,
        np.full(batch_size, model.vocab.entity_go),
        np.full(batch_size, model.vocab.negation_go),
    )


def _tagger_step(model: Model, name: str, x: Tensor, state: TaggerState, train: bool):
    h, c = ag.lstm_step(ag.lstm_params(model.params, f"tagger.{name}"), x, state.h[name], state.c[name])
    new_state = replace(state, h={**state.h, name: h}, c={**state.c, name: c})
    out = h
    if model.config.dropout_tagger:
        out = ag.dropout(h, model.config.dropout_rate, train, model.rng)
    return out, new_state


def _head(model: Model, task: str, x: Tensor) -> Tensor:
    p = model.params
    return ag.softmax(ag.affine(x, p[f"head.{task}.W"], p[f"head.{task}.b"]))


def _prev(state: TaggerState, task: str) -> np.ndarray:
    return state.prev_entity_tag if task == "entity" else state.prev_negation_tag


def decode_step_independent(enc_t: Tensor, state: TaggerState, model: Model, task: str, train: bool = False):
    """Single-task tagger: LSTM over [encoding, embedding of previous tag], then softmax."""
    if model.config.heads_on_encoder:
        return _head(model, task, enc_t), state
    x = ag.concat([enc_t, ag.embed(model.params[f"tag_emb.{task}"], _prev(state, task))])
    hidden, state = _tagger_step(model, task, x, state, train)
    return _head(model, task, hidden), state


def decode_step_two(enc_t: Tensor, state: TaggerState, model: Model, train: bool = False):
    ent, state = decode_step_independent(enc_t, state, model, "entity", train)
    neg, state = decode_step_independent(enc_t, state, model, "negation", train)
    return ent, neg, state


def _shared_hidden(enc_t: Tensor, state: TaggerState, model: Model, train: bool):
    if model.config.heads_on_encoder:
        return enc_t, state
    p = model.params
    x = ag.concat(
        [
            enc_t,
            ag.embed(p["tag_emb.entity"], state.prev_entity_tag),
            ag.embed(p["tag_emb.negation"], state.prev_negation_tag),
        ]
    )
    return _tagger_step(model, "shared", x, state, train)


def decode_step_shared(enc_t: Tensor, state: TaggerState, model: Model, train: bool = False):
    """One tagger LSTM; its output feeds both softmax heads."""
    hidden, state = _shared_hidden(enc_t, state, model, train)
    return _head(model, "entity", hidden), _head(model, "negation", hidden), state


def decode_step_conditional(
    enc_t: Tensor,
    state: TaggerState,
    model: Model,
    train: bool = False,
    entity_override: np.ndarray | None = None,
):
    """Shared tagger whose negation head also reads the entity distribution.

    ``entity_override`` replaces the entity probabilities fed to the
    negation head (for intervention tests); the returned entity
    probabilities are unaffected by it.
    """
    hidden, state = _shared_hidden(enc_t, state, model, train)
    ent = _head(model, "entity", hidden)
    if entity_override is not None:
        cond = Tensor(np.broadcast_to(np.asarray(entity_override, dtype=ent.dtype), ent.shape).copy())
    elif model.config.stop_gradient:
        cond = ag.detach(ent)
    else:
        cond = ent
    neg = _head(model, "negation", ag.concat([hidden, cond]))
    return ent, neg, state


def decode_step(model: Model, enc_t: Tensor, state: TaggerState, train: bool = False) -> tuple[dict, TaggerState]:
    v = model.variant
    if v is Variant.INDEPENDENT_NER:
        ent, state = decode_step_independent(enc_t, state, model, "entity", train)
        return {"entity": ent}, state
    if v is Variant.INDEPENDENT_NEGATION:
        neg, state = decode_step_independent(enc_t, state, model, "negation", train)
        return {"negation": neg}, state
    if v is Variant.TWO:
        ent, neg, state = decode_step_two(enc_t, state, model, train)
    elif v is Variant.SHARED:
        ent, neg, state = decode_step_shared(enc_t, state, model, train)
    elif v is Variant.CONDITIONAL:
        ent, neg, state = decode_step_conditional(enc_t, state, model, train)
    else:  # pragma: no cover - enum is exhaustive
        raise ConfigError(f"unhandled variant {v}")
    return {"entity": ent, "negation": neg}, state


def teacher_forced_probs(model: Model, batch: Batch, train: bool) -> dict[str, Tensor]:
    """Per-task probabilities [T, B, K] with gold previous tags.

    Same model as the stepwise decoders, but each tagger LSTM is unrolled as
    one node since every input is known upfront.
    """
    cfg, p, vocab = model.config, model.params, model.vocab
    enc = encode(batch, model, train)
    O = enc.output
    B = batch.size
    prev = {
        "entity": np.concatenate([np.full((1, B), vocab.entity_go), batch.entity_gold.T[:-1]]),
        "negation": np.concatenate([np.full((1, B), vocab.negation_go), batch.negation_gold.T[:-1]]),
    }

    def hidden(name: str, tasks: tuple[str, ...]) -> Tensor:
        if cfg.heads_on_encoder:
            return O
        x = ag.concat([O] + [ag.embed(p[f"tag_emb.{task}"], prev[task]) for task in tasks])
        h = ag.lstm_sequence(ag.lstm_params(p, f"tagger.{name}"), x)
        if cfg.dropout_tagger:
            h = ag.dropout(h, cfg.dropout_rate, train, model.rng)
        return h

    v = model.variant
    out = {}
    if v in (Variant.SHARED, Variant.CONDITIONAL):
        h = hidden("shared", ("entity", "negation"))
        out["entity"] = _head(model, "entity", h)
        if v is Variant.SHARED:
            out["negation"] = _head(model, "negation", h)
        else:
            cond = ag.detach(out["entity"]) if cfg.stop_gradient else out["entity"]
            out["negation"] = _head(model, "negation", ag.concat([h, cond]))
    else:
        for task in model.tasks:
            out[task] = _head(model, task, hidden(task, (task,)))
    return out


def run_decoder(model: Model, batch: Batch, train: bool, teacher_forcing: bool):
    """Encode and decode a batch.

    Returns ``(probs, predictions)``: ``probs[t][task]`` is a [B, K] tensor,
    ``predictions[task]`` an int array [B, T] of argmax tags.
    """
    states = encode(batch, model, train).states
    state = initial_state(model, batch.size)
    probs = []
    preds = {task: np.zeros((batch.size, batch.max_len), dtype=np.int64) for task in model.tasks}
    for t in range(batch.max_len):
        out, state = decode_step(model, states[t], state, train)
        probs.append(out)
        for task, p in out.items():
            preds[task][:, t] = np.argmax(p.data, axis=-1)
        if teacher_forcing:
            state = state.with_prev(batch.entity_gold[:, t], batch.negation_gold[:, t])
        else:
            state = state.with_prev(
                preds["entity"][:, t] if "entity" in preds else None,
                preds["negation"][:, t] if "negation" in preds else None,
            )
    return probs, preds


def greedy_decode(sentences: Sequence[Sentence] | Sentence, model: Model, batch_size: int = 32):
    """Tag sentences with argmax feedback.

    Returns ``{task: [tag list per sentence]}``; tasks the variant does not
    serve are absent.
    """
    single = isinstance(sentences, Sentence)
    items = [sentences] if single else list(sentences)
    vocab = model.vocab
    names = {"entity": vocab.id_to_entity_tag, "negation": vocab.id_to_negation_tag}
    out = {task: [] for task in model.tasks}
    for i in range(0, len(items), batch_size):
        chunk = items[i : i + batch_size]
        _, preds = run_decoder(model, model.batch(chunk), train=False, teacher_forcing=False)
        for task in model.tasks:
            for b, s in enumerate(chunk):
                out[task].append([names[task][k] for k in preds[task][b, : len(s)]])
    if single:
        return {task: seqs[0] for task, seqs in out.items()}
    return out
