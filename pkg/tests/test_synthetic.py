import filecmp

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ngnn.corpus import read_corpus, split_corpus
from ngnn.errors import GenerationError, ItemLookupError
from ngnn.features import load_dense_features
from ngnn.synthetic import PlantedWorld, WorldConfig, generate, load_world, oracle_score

SMALL = WorldConfig(n_train=150, n_valid=20, n_test=40)


@pytest.fixture(scope="module")
def small():
    return generate(SMALL, seed=3)


def toy_world(styles):
    styles = np.asarray(styles, dtype=np.float64)
    ids = [f"x{i}" for i in range(len(styles))]
    return PlantedWorld(WorldConfig(), 0, ["c"], ids, np.zeros(len(ids), dtype=np.int64), styles)


def test_same_seed_gives_identical_files(tmp_path):
    a = generate(SMALL, seed=11).write(tmp_path / "a")
    b = generate(SMALL, seed=11).write(tmp_path / "b")
    for key in a:
        assert filecmp.cmp(a[key], b[key], shallow=False), key
    c = generate(SMALL, seed=12).write(tmp_path / "c")
    assert not filecmp.cmp(a["corpus"], c["corpus"], shallow=False)


def test_outfit_sizes_and_splits(small):
    sizes = [len(o) for o in small.outfits]
    assert min(sizes) >= 3 and max(sizes) <= 8
    assert set(sizes) == set(range(3, 9))
    splits = split_corpus(small.outfits)
    assert [len(splits[s]) for s in ("train", "valid", "test")] == [150, 20, 40]
    assert len({o.outfit_id for o in small.outfits}) == len(small.outfits)
    for o in small.outfits:
        assert len(set(o.categories)) == len(o)
        assert -oracle_score(o, small.world) <= SMALL.max_dispersion


def test_positives_beat_random_sets(small):
    rng = np.random.default_rng(0)
    ids = small.world.item_ids
    wins = 0
    for _ in range(1000):
        pos = small.outfits[rng.integers(len(small.outfits))]
        rand = [ids[i] for i in rng.choice(len(ids), size=len(pos), replace=False)]
        wins += oracle_score(pos, small.world) > oracle_score(rand, small.world)
    assert wins >= 950


def test_features_are_what_the_files_hold(tmp_path, small):
    paths = small.write(tmp_path)
    vis = load_dense_features(paths["visual"], SMALL.visual_dim)
    txt = load_dense_features(paths["textual"], SMALL.textual_dim)
    np.testing.assert_array_equal(vis.matrix, small.visual.matrix)
    np.testing.assert_array_equal(txt.matrix, small.textual.matrix)
    assert set(np.unique(txt.matrix)) <= {0.0, 1.0}
    assert read_corpus(paths["corpus"]) == small.outfits


def test_world_json_round_trip(tmp_path, small):
    paths = small.write(tmp_path)
    back = load_world(paths["world"])
    assert back.config == small.world.config and back.seed == 3
    np.testing.assert_array_equal(back.styles, small.world.styles)
    o = small.outfits[0]
    assert oracle_score(o, back) == oracle_score(o, small.world)


def test_oracle_examples():
    world = toy_world([[1.0, 2.0], [1.0, 2.0], [1.0, 2.0], [4.0, 6.0]])
    assert oracle_score(["x0", "x1", "x2"], world) == 0.0
    assert oracle_score(["x0", "x3"], world) == -5.0
    assert oracle_score(["x0", "x3", "x1"], world) == oracle_score(["x3", "x1", "x0"], world)


def test_unknown_item_is_a_lookup_error(small):
    with pytest.raises(ItemLookupError, match="nope"):
        oracle_score(["c00_i000", "nope"], small.world)


@pytest.mark.parametrize("config", [
    WorldConfig(n_categories=3, max_size=3),
    WorldConfig(items_per_category=5),
    WorldConfig(max_size=13),
])
def test_invalid_configs(config):
    with pytest.raises(GenerationError):
        generate(config)


def test_infeasible_world_is_a_generation_error():
    # a dispersion threshold no random trio can meet
    with pytest.raises(GenerationError, match="positive outfits"):
        generate(WorldConfig(n_train=50, n_valid=5, n_test=5, max_dispersion=1e-6))


styles_strategy = st.integers(2, 6).flatmap(
    lambda n: st.lists(st.lists(st.floats(-3, 3), min_size=3, max_size=3), min_size=n, max_size=n))


@settings(max_examples=60, deadline=None)
@given(styles=styles_strategy, factor=st.floats(0.05, 0.95), seed=st.integers(0, 1000))
def test_oracle_is_order_invariant_and_scale_monotone(styles, factor, seed):
    styles = np.asarray(styles)
    ids = [f"x{i}" for i in range(len(styles))]
    world = toy_world(styles)
    base = oracle_score(ids, world)
    perm = np.random.default_rng(seed).permutation(len(ids))
    assert oracle_score([ids[i] for i in perm], world) == pytest.approx(base, abs=1e-12)
    shrunk = toy_world(styles.mean(axis=0) + factor * (styles - styles.mean(axis=0)))
    if base < -1e-9:
        assert oracle_score(ids, shrunk) > base
    assert oracle_score(ids, world) <= 0.0
