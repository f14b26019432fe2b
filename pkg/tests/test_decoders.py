import numpy as np
import pytest

from negtag.data import build_vocab
from negtag.decoders import (
    Model,
    count_parameters,
    decode_step_conditional,
    decode_step_shared,
    decode_step_two,
    greedy_decode,
    head_input_dims,
    initial_state,
    run_decoder,
    teacher_forced_probs,
)
from negtag.encoder import ModelConfig, Variant, encode
from negtag.synth import synth_generate
from negtag.training import TrainConfig, train

TINY = dict(word_emb_dim=6, char_emb_dim=4, tag_emb_dim=3, char_hidden=3, word_hidden=4, tagger_hidden=5,
            dtype="float64")
CORPUS = synth_generate(21, 12)
VOCAB = build_vocab(CORPUS)


def model(variant, seed=0, **kw):
    return Model(ModelConfig(variant=variant, **{**TINY, **kw}), VOCAB, seed=seed)


def first_step(m, step):
    batch = m.batch(CORPUS.sentences[:3])
    enc = encode(batch, m)
    return step(enc.states[0], initial_state(m, batch.size), m)


@pytest.mark.parametrize("variant", list(Variant))
def test_probabilities_are_distributions(variant):
    m = model(variant)
    probs, preds = run_decoder(m, m.batch(CORPUS.sentences), train=False, teacher_forcing=False)
    for step in probs:
        assert set(step) == set(variant.tasks)
        for p in step.values():
            np.testing.assert_allclose(p.data.sum(axis=-1), 1.0, atol=1e-6)
            assert np.all(p.data > 0)


def test_independent_ner_has_no_negation():
    out = greedy_decode(CORPUS.sentences, model("independent-ner"))
    assert set(out) == {"entity"}


def test_initial_state_uses_go():
    m = model("two")
    st = initial_state(m, 2)
    assert list(st.prev_entity_tag) == [VOCAB.entity_go] * 2
    assert list(st.prev_negation_tag) == [VOCAB.negation_go] * 2


def test_two_decoder_no_cross_wiring():
    m = model("two")
    ent, _, _ = first_step(m, decode_step_two)
    for name, t in m.params.items():
        if name.startswith(("tagger.negation", "head.negation", "tag_emb.negation")):
            t.data[...] = 0.0
    ent2, neg2, _ = first_step(m, decode_step_two)
    np.testing.assert_array_equal(ent.data, ent2.data)
    np.testing.assert_allclose(neg2.data, 1 / 3)


def test_shared_zero_entity_head_uniform():
    m = model("shared")
    m.params["head.entity.W"].data[...] = 0.0
    m.params["head.entity.b"].data[...] = 0.0
    ent, _, _ = first_step(m, decode_step_shared)
    np.testing.assert_allclose(ent.data, 1 / 7)


def test_shared_heads_read_same_hidden():
    m = model("shared")
    ent, neg, _ = first_step(m, decode_step_shared)
    m.params["tagger.shared.W_x"].data[...] *= 1.5
    ent2, neg2, _ = first_step(m, decode_step_shared)
    assert not np.allclose(ent.data, ent2.data)
    assert not np.allclose(neg.data, neg2.data)


def test_conditional_negation_input_dim():
    cfg = ModelConfig()
    assert head_input_dims(cfg, 7)["negation"] == 57
    m = Model(cfg, VOCAB)
    assert m.params["head.negation.W"].shape == (3, 57)


def test_conditional_override_changes_negation_only():
    m = model("conditional")
    ent, neg, _ = first_step(m, decode_step_conditional)
    onehot = np.eye(7)[0]
    batch = m.batch(CORPUS.sentences[:3])
    enc = encode(batch, m)
    ent2, neg2, _ = decode_step_conditional(enc.states[0], initial_state(m, 3), m, entity_override=onehot)
    np.testing.assert_array_equal(ent.data, ent2.data)
    assert not np.allclose(neg.data, neg2.data)


def test_shared_and_conditional_entity_paths_identical():
    a, b = model("shared", seed=3), model("conditional", seed=3)
    for name in a.params:
        if not name.startswith("head.negation"):
            np.testing.assert_array_equal(a.params[name].data, b.params[name].data)
    pa = teacher_forced_probs(a, a.batch(CORPUS.sentences), train=False)["entity"].data
    pb = teacher_forced_probs(b, b.batch(CORPUS.sentences), train=False)["entity"].data
    np.testing.assert_array_equal(pa, pb)


@pytest.mark.parametrize("variant", list(Variant))
def test_vectorised_matches_stepwise(variant):
    m = model(variant)
    batch = m.batch(CORPUS.sentences)
    fast = teacher_forced_probs(m, batch, train=False)
    slow, _ = run_decoder(m, batch, train=False, teacher_forcing=True)
    for task in variant.tasks:
        stacked = np.stack([s[task].data for s in slow])
        np.testing.assert_allclose(fast[task].data, stacked, atol=1e-12)


def test_zeroed_heads_decode_tag_zero():
    m = model("conditional")
    for task in ("entity", "negation"):
        m.params[f"head.{task}.W"].data[...] = 0.0
        m.params[f"head.{task}.b"].data[...] = 0.0
    out = greedy_decode(CORPUS.sentences, m)
    for task in ("entity", "negation"):
        for s, tags in zip(CORPUS, out[task]):
            assert len(tags) == len(s)
            assert set(tags) == {"O"}


def test_greedy_single_and_batched_agree():
    m = model("shared")
    single = [greedy_decode(s, m) for s in CORPUS]
    batched = greedy_decode(CORPUS.sentences, m, batch_size=5)
    for i, one in enumerate(single):
        assert one["entity"] == batched["entity"][i]
        assert one["negation"] == batched["negation"][i]


@pytest.mark.parametrize("variant", list(Variant))
def test_parameter_count_closed_form(variant):
    m = model(variant)
    assert m.num_parameters() == count_parameters(m.config, VOCAB.n_words, VOCAB.n_chars)
    default = Model(ModelConfig(variant=variant), VOCAB)
    assert default.num_parameters() == count_parameters(default.config, VOCAB.n_words, VOCAB.n_chars)


def test_parameter_count_ordering():
    counts = {v: count_parameters(ModelConfig(variant=v), 1000, 60) for v in Variant}
    assert counts[Variant.SHARED] < counts[Variant.CONDITIONAL] < counts[Variant.TWO]
    assert counts[Variant.CONDITIONAL] - counts[Variant.SHARED] == 7 * 3
    enc_only = count_parameters(ModelConfig(variant="independent-ner"), 1000, 60) + count_parameters(
        ModelConfig(variant="independent-negation"), 1000, 60
    )
    # two independent models duplicate the encoder that the two-decoder shares
    assert counts[Variant.TWO] < enc_only


# -- trained toy model ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def toy():
    data = synth_generate(99, 200)
    dev = synth_generate(98, 40)
    cfg = ModelConfig(variant="conditional", word_emb_dim=32, char_emb_dim=8, tag_emb_dim=8, char_hidden=8,
                      word_hidden=32, tagger_hidden=32)
    m, _ = train(data, dev, cfg, TrainConfig(epochs_max=30, patience=30, seed=1))
    return m, data


def test_toy_teacher_forcing_sensitivity(toy):
    m, data = toy
    batch = m.batch(data.sentences[:16])
    gold_fed, _ = run_decoder(m, batch, train=False, teacher_forcing=True)
    pred_fed, _ = run_decoder(m, batch, train=False, teacher_forcing=False)
    # the previous-tag input matters: alter it and the distributions move
    st = initial_state(m, batch.size)
    enc = encode(batch, m)
    a, _, _ = decode_step_conditional(enc.states[1], st.with_prev(np.zeros(batch.size, dtype=int)), m)
    b, _, _ = decode_step_conditional(enc.states[1], st.with_prev(np.full(batch.size, 1)), m)
    assert not np.allclose(a.data, b.data)
    diffs = [np.abs(g["entity"].data - p["entity"].data).max() for g, p in zip(gold_fed, pred_fed)]
    assert len(diffs) == batch.max_len
    assert max(diffs) > 1e-6


def test_toy_conditional_intervention(toy):
    m, data = toy
    batch = m.batch([s for s in data.sentences if any(t != "O" for t in s.negation_tags)][:32])
    enc = encode(batch, m)
    K = len(VOCAB.id_to_entity_tag) - 1
    outside = np.eye(K)[m.vocab.entity_tag_to_id["O"]]
    problem = np.eye(K)[m.vocab.entity_tag_to_id["B-PROBLEM"]]
    st = initial_state(m, batch.size)
    neg_mass = {"O": [], "P": []}
    for t, enc_t in enumerate(enc.states):
        _, n_o, _ = decode_step_conditional(enc_t, st, m, entity_override=outside)
        _, n_p, new = decode_step_conditional(enc_t, st, m, entity_override=problem)
        live = batch.mask[:, t] > 0
        neg_mass["O"].append((n_o.data[live, 1] + n_o.data[live, 2]).mean())
        neg_mass["P"].append((n_p.data[live, 1] + n_p.data[live, 2]).mean())
        st = new.with_prev(batch.entity_gold[:, t], batch.negation_gold[:, t])
    assert np.mean(neg_mass["O"]) < np.mean(neg_mass["P"])


def test_toy_decoding_deterministic(toy):
    m, data = toy
    a = greedy_decode(data.sentences[:20], m)
    b = greedy_decode(data.sentences[:20], m)
    assert a == b
