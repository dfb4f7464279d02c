from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ngnn.corpus import Item, Outfit  # noqa: E402
from ngnn.features import FeatureStore  # noqa: E402
from ngnn.graph import build_graph, build_vocab  # noqa: E402
from ngnn.model import CompatibilityModel, ModelConfig  # noqa: E402


def outfit(oid: str, cats: str, split: str = "train", tag: str = "") -> Outfit:
    """Outfit with one item per category letter, item ids like ``A1`` or ``A1x``."""
    return Outfit(oid, tuple(Item(f"{c}{oid}{tag}", c) for c in cats), split)


@pytest.fixture
def hand_corpus() -> list[Outfit]:
    # Count(A,B)=2, Count(A,C)=1, Count(B,C)=2; Count(A)=2, Count(B)=3, Count(C)=2
    return [outfit("1", "AB"), outfit("2", "ABC"), outfit("3", "BC")]


@pytest.fixture
def hand_graph(hand_corpus):
    return build_graph(hand_corpus, build_vocab(hand_corpus, 0))


def random_features(outfits, dims: dict[str, int], rng: np.random.Generator) -> dict[str, FeatureStore]:
    ids = sorted({it.item_id for o in outfits for it in o.items})
    stores = {}
    for modality, F in dims.items():
        if modality == "textual":
            mat = (rng.random((len(ids), F)) < 0.4).astype(float)
        else:
            mat = rng.normal(size=(len(ids), F))
        stores[modality] = FeatureStore(modality, F, ids, mat)
    return stores


def toy_model(graph, variant="NGNN", modality="multimodal", d=3, T=2, beta=0.3, dims=None, seed=0,
              bias_scale=0.1):
    """Small model with nonzero biases so every parameter matters."""
    dims = dims or {"visual": 4, "textual": 5}
    cfg = ModelConfig(d=d, T=T, variant=variant, modality=modality, beta=beta)
    rng = np.random.default_rng(seed)
    model = CompatibilityModel.init(cfg, graph, {k: dims[k] for k in cfg.channels}, rng)
    for _, t in model.parameters():
        if t.data.ndim == 1:
            t.data[:] = rng.normal(scale=bias_scale, size=t.data.shape)
    return model
