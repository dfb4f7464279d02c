import struct

import numpy as np
import pytest

from ngnn.checkpoint import MAGIC, file_digest, load_checkpoint, read_header, save_checkpoint
from ngnn.errors import FormatError
from ngnn.model import VARIANTS

from conftest import outfit, random_features, toy_model


@pytest.mark.parametrize("variant", VARIANTS)
def test_round_trip_is_bit_exact(tmp_path, hand_graph, variant):
    model = toy_model(hand_graph, variant=variant)
    digest = save_checkpoint(model, tmp_path / "m.ckpt", extra={"epoch": 3})
    assert digest == file_digest(tmp_path / "m.ckpt")
    back, header = load_checkpoint(tmp_path / "m.ckpt")
    assert back.config == model.config
    assert header["extra"] == {"epoch": 3}
    np.testing.assert_array_equal(back.graph.adjacency, hand_graph.adjacency)
    assert back.graph.vocab.categories == hand_graph.vocab.categories
    orig = dict(model.parameters())
    restored = dict(back.parameters())
    assert orig.keys() == restored.keys()
    for name in orig:
        np.testing.assert_array_equal(restored[name].data, orig[name].data)

    outs = [outfit("9", "ABC"), outfit("8", "AC")]
    feats = random_features(outs, {"visual": 4, "textual": 5}, np.random.default_rng(1))
    np.testing.assert_array_equal(back.score(outs, feats), model.score(outs, feats))


def test_same_model_same_bytes(tmp_path, hand_graph):
    a = save_checkpoint(toy_model(hand_graph, seed=4), tmp_path / "a.ckpt")
    b = save_checkpoint(toy_model(hand_graph, seed=4), tmp_path / "b.ckpt")
    assert a == b
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert save_checkpoint(toy_model(hand_graph, seed=5), tmp_path / "c.ckpt") != a


def test_bad_magic(tmp_path):
    (tmp_path / "x.ckpt").write_bytes(b"NOTACKPT" + bytes(20))
    with pytest.raises(FormatError, match="not a checkpoint"):
        load_checkpoint(tmp_path / "x.ckpt")


def test_unknown_version(tmp_path, hand_graph):
    save_checkpoint(toy_model(hand_graph), tmp_path / "m.ckpt")
    data = bytearray((tmp_path / "m.ckpt").read_bytes())
    struct.pack_into("<I", data, len(MAGIC), 99)
    (tmp_path / "m.ckpt").write_bytes(bytes(data))
    with pytest.raises(FormatError, match="version 99"):
        read_header(tmp_path / "m.ckpt")


def test_truncated_payload(tmp_path, hand_graph):
    save_checkpoint(toy_model(hand_graph), tmp_path / "m.ckpt")
    data = (tmp_path / "m.ckpt").read_bytes()
    (tmp_path / "m.ckpt").write_bytes(data[:-16])
    with pytest.raises(FormatError, match="past the end"):
        load_checkpoint(tmp_path / "m.ckpt")


def test_tampered_graph_is_detected(tmp_path, hand_graph):
    save_checkpoint(toy_model(hand_graph), tmp_path / "m.ckpt")
    header, _ = read_header(tmp_path / "m.ckpt")
    data = bytearray((tmp_path / "m.ckpt").read_bytes())
    # the adjacency is the first tensor of the payload; flip one nonzero weight
    start = len(data) - sum(8 * int(np.prod(t["shape"])) for t in header["tensors"])
    adj = np.frombuffer(bytes(data[start:start + 72]), dtype="<f8").copy()
    k = int(np.flatnonzero(adj)[0])
    adj[k] += 0.25
    data[start:start + 72] = adj.tobytes()
    (tmp_path / "m.ckpt").write_bytes(bytes(data))
    with pytest.raises(FormatError, match="graph hash"):
        load_checkpoint(tmp_path / "m.ckpt")
