import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ngnn.corpus import item_pool, split_corpus
from ngnn.errors import SamplingError
from ngnn.evaluation import (EvalPair, FitbQuestion, auc, build_auc_set, build_fitb_set, fitb_accuracy,
                             read_auc_set, read_fitb_set, report, set_digest, write_set)
from ngnn.synthetic import WorldConfig, generate, oracle_score


@pytest.fixture(scope="module")
def world():
    data = generate(WorldConfig(n_train=100, n_valid=20, n_test=120), seed=5)
    return data, split_corpus(data.outfits)["test"], item_pool(data.outfits)


def oracle(data):
    return lambda outfits: np.array([oracle_score(o, data.world) for o in outfits])


def constant(outfits):
    return np.zeros(len(outfits))


def test_fitb_set_shape(world):
    data, test, pool = world
    qs = build_fitb_set(test, pool, np.random.default_rng(0))
    assert len(qs) == len(test)
    for q in qs:
        assert len(q.candidates) == 4
        assert q.candidates[q.answer] == q.outfit.items[q.slot]
        assert len({c.item_id for c in q.candidates}) == 4
        for filled in q.filled():
            assert len(set(filled.categories)) == len(filled)


def test_fitb_same_category_mode(world):
    data, test, pool = world
    for q in build_fitb_set(test, pool, np.random.default_rng(0), same_category=True):
        assert {c.category for c in q.candidates} == {q.outfit.items[q.slot].category}


def test_sets_are_reproducible(world):
    data, test, pool = world
    a = build_fitb_set(test, pool, np.random.default_rng(9))
    b = build_fitb_set(test, pool, np.random.default_rng(9))
    assert set_digest(a) == set_digest(b)
    c = build_auc_set(test, pool, np.random.default_rng(9))
    d = build_auc_set(test, pool, np.random.default_rng(9))
    assert set_digest(c) == set_digest(d)
    assert set_digest(a) != set_digest(build_fitb_set(test, pool, np.random.default_rng(10)))


def test_auc_set_shape(world):
    data, test, pool = world
    pairs = build_auc_set(test, pool, np.random.default_rng(0))
    assert len(pairs) == len(test)
    for p in pairs:
        assert len(p.negative) == len(p.positive)
        assert len(set(p.negative.categories)) == len(p.negative)


def test_too_small_pool_is_an_error(world):
    data, test, pool = world
    with pytest.raises(SamplingError):
        build_fitb_set(test[:1], test[0].items[:2], np.random.default_rng(0), max_retries=100)
    with pytest.raises(SamplingError):
        build_auc_set(test[:1], [test[0].items[0]], np.random.default_rng(0), max_retries=100)
    with pytest.raises(SamplingError):
        build_fitb_set([], pool, np.random.default_rng(0))


def test_oracle_scorer_is_perfect(world):
    data, test, pool = world
    pairs = build_auc_set(test, pool, np.random.default_rng(1))
    positives = {o.outfit_id for o in test}
    assert auc(pairs, lambda outs: np.array([float(o.outfit_id in positives) for o in outs])).value == 1.0
    # the planted style oracle: random negatives are occasionally coherent by chance
    assert auc(pairs, oracle(data)).value >= 0.95
    qs = build_fitb_set(test, pool, np.random.default_rng(1))
    truth = {(q.outfit.outfit_id, q.candidates[q.answer].item_id) for q in qs}
    slot = {q.outfit.outfit_id: q.slot for q in qs}

    def knows(outfits):
        return np.array([float((o.outfit_id, o.items[slot[o.outfit_id]].item_id) in truth) for o in outfits])

    res = fitb_accuracy(qs, knows)
    assert res.value == 1.0 and res.ties == 0 and res.count == len(qs)


def test_constant_scorer_baselines(world):
    data, test, pool = world
    pairs = build_auc_set(test, pool, np.random.default_rng(2))
    res = auc(pairs, constant)
    assert res.value == 0.0 and res.ties == len(pairs)
    hits = []
    for seed in range(10):
        r = fitb_accuracy(build_fitb_set(test, pool, np.random.default_rng(seed)), constant)
        assert r.ties == r.count
        hits.append(r.value)
    assert np.mean(hits) == pytest.approx(0.25, abs=0.04)


def test_fitb_ties_go_to_lowest_index(world):
    data, test, pool = world
    qs = build_fitb_set(test, pool, np.random.default_rng(3))

    # the answer and candidate 0 share the top score; everything else scores lower
    def tie_with_first(outfits):
        out = []
        for k, o in enumerate(outfits):
            q = qs[k // 4]
            c = o.items[q.slot]
            out.append(1.0 if c in (q.candidates[0], q.candidates[q.answer]) else 0.0)
        return np.array(out)

    res = fitb_accuracy(qs, tie_with_first)
    assert res.value == np.mean([q.answer == 0 for q in qs])
    assert res.ties == sum(q.answer != 0 for q in qs)


@settings(max_examples=25, deadline=None)
@given(shift=st.floats(-5, 5), log_scale=st.floats(-2, 2))
def test_metrics_invariant_under_increasing_transforms(shift, log_scale):
    data = generate(WorldConfig(n_train=40, n_valid=10, n_test=40), seed=1)
    test = split_corpus(data.outfits)["test"]
    pool = item_pool(data.outfits)
    base = lambda outs: np.array([oracle_score(o, data.world) + 0.3 * len(o) for o in outs])  # noqa: E731
    warped = lambda outs: np.exp(log_scale) * np.tanh(base(outs) / 10) + shift  # noqa: E731
    pairs = build_auc_set(test, pool, np.random.default_rng(0))
    qs = build_fitb_set(test, pool, np.random.default_rng(0))
    assert auc(pairs, base).value == auc(pairs, warped).value
    assert fitb_accuracy(qs, base).value == fitb_accuracy(qs, warped).value


def test_set_export_import_round_trip(tmp_path, world):
    data, test, pool = world
    qs = build_fitb_set(test, pool, np.random.default_rng(4))
    pairs = build_auc_set(test, pool, np.random.default_rng(4))
    h1 = write_set(qs, tmp_path / "fitb.jsonl")
    h2 = write_set(pairs, tmp_path / "auc.jsonl")
    assert read_fitb_set(tmp_path / "fitb.jsonl") == qs
    assert read_auc_set(tmp_path / "auc.jsonl") == pairs
    assert h1 == set_digest(qs) and h2 == set_digest(pairs)
    assert isinstance(qs[0], FitbQuestion) and isinstance(pairs[0], EvalPair)


def test_report_fields(world):
    data, test, pool = world
    pairs = build_auc_set(test, pool, np.random.default_rng(4))
    res = auc(pairs, oracle(data))
    rep = report(res, 4, "abc", set_digest(pairs))
    assert rep == {"metric": "auc", "value": res.value, "ties": 0, "count": len(pairs), "seed": 4,
                   "checkpoint_hash": "abc", "eval_set_hash": set_digest(pairs)}


def test_empty_inputs_give_empty_metrics():
    assert auc([], constant).count == 0
    assert fitb_accuracy([], constant).count == 0
