import pytest

from negtag.data import corpus_stats
from negtag.errors import UsageError
from negtag.evaluation import tags_to_spans
from negtag.synth import PROBLEM_CLAUSES, SynthConfig, generate_splits, split_sizes, synth_generate


def test_deterministic_single():
    assert synth_generate(1, 1)[0] == synth_generate(1, 1)[0]


def test_deterministic_corpus():
    a, b = synth_generate(5, 300), synth_generate(5, 300)
    assert a.sentences == b.sentences


def test_different_seeds_differ():
    assert synth_generate(1, 50).sentences != synth_generate(2, 50).sentences


def test_rejects_empty():
    with pytest.raises(UsageError):
        synth_generate(1, 0)


def test_zero_negation_rate_has_no_negation():
    ds = synth_generate(3, 500, SynthConfig(negation_rate=0.0))
    assert all(t == "O" for s in ds for t in s.negation_tags)


def test_negation_only_inside_problem_spans():
    for s in synth_generate(11, 2000):
        problems = {(sp.start, sp.end) for sp in tags_to_spans(s.entity_tags) if sp.label == "PROBLEM"}
        for sp in tags_to_spans(s.negation_tags):
            assert (sp.start, sp.end) in problems


def test_tags_are_valid_bio():
    for s in synth_generate(4, 1000):
        for tags in (s.entity_tags, s.negation_tags):
            for k, t in enumerate(tags):
                if t.startswith("I-"):
                    assert k > 0 and tags[k - 1][2:] == t[2:]


def test_negated_fraction_close_to_rate():
    stats = corpus_stats(synth_generate(1, 10_000))
    assert abs(stats.negated_problem_fraction - 0.3) <= 0.02


def test_templates_have_matching_slots():
    for affirmed, negated in PROBLEM_CLAUSES:
        assert affirmed.count("{P}") == negated.count("{P}")


def test_noise_present():
    ds = synth_generate(2, 2000)
    vocab_noisy = {t.lower() for s in ds for t in s.tokens}
    ds_clean = synth_generate(2, 2000, SynthConfig(noise_rate=0.0, abbrev_rate=0.0))
    vocab_clean = {t.lower() for s in ds_clean for t in s.tokens}
    assert len(vocab_noisy) > len(vocab_clean)


@pytest.mark.parametrize("n, split, expected", [(2000, (80, 10, 10), (1600, 200, 200)), (7, (80, 10, 10), (5, 2, 0)),
                                                (101, (70, 15, 15), (70, 16, 15))])
def test_split_sizes(n, split, expected):
    assert split_sizes(n, split) == expected
    assert sum(split_sizes(n, split)) == n


def test_generate_splits_disjoint_streams():
    sp = generate_splits(7, 300)
    assert [len(sp[k]) for k in ("train", "dev", "test")] == [240, 30, 30]
    assert sp["train"][0] != sp["dev"][0]
    assert sp["dev"].split == "dev"
