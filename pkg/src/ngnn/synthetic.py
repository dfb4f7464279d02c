"""Synthetic outfit corpora with a planted notion of compatibility.

Every item has a hidden style vector. Positive outfits gather items whose
styles sit close together; compatibility is the negative mean pairwise style
distance. Items are observed through two noisy linear views of their style:
a dense "visual" vector (projection depends on the category) and a Boolean
"textual" vector (thresholded shared projection).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Item, Outfit, write_corpus
from .errors import GenerationError, ItemLookupError
from .features import FeatureStore, write_dense_features
from .seeding import stream

SIZE_WEIGHTS = {3: 1, 4: 1, 5: 2, 6: 3, 7: 3, 8: 2}


@dataclass(frozen=True)
class WorldConfig:
    n_categories: int = 12
    items_per_category: int = 50
    style_dim: int = 3
    visual_dim: int = 32
    textual_dim: int = 48
    n_train: int = 2000
    n_valid: int = 200
    n_test: int = 400
    min_size: int = 3
    max_size: int = 8
    neighbours: int = 3           # replacement drawn among this many nearest items
    max_dispersion: float = 1.0   # planted threshold on mean pairwise distance
    visual_noise: float = 0.1
    textual_noise: float = 0.3
    # category popularity falls off as rank**-skew; 0 draws categories
    # uniformly, matching the category mix of random evaluation negatives
    popularity_skew: float = 0.0

    def problems(self) -> list[str]:
        out = []
        if self.n_categories < 4:
            out.append("n_categories must be at least 4")
        if self.items_per_category < 10:
            out.append("items_per_category must be at least 10")
        if not 3 <= self.min_size <= self.max_size:
            out.append("need 3 <= min_size <= max_size")
        if self.max_size > self.n_categories:
            out.append("max_size cannot exceed n_categories (categories are distinct within an outfit)")
        if self.popularity_skew < 0:
            out.append("popularity_skew must be non-negative")
        if self.neighbours < 1 or self.neighbours > self.items_per_category:
            out.append("neighbours must lie in [1, items_per_category]")
        return out


@dataclass(eq=False)
class PlantedWorld:
    config: WorldConfig
    seed: int
    categories: list[str]
    item_ids: list[str]
    item_category: np.ndarray  # (I,)
    styles: np.ndarray          # (I, k)

    def __post_init__(self):
        self._index = {k: i for i, k in enumerate(self.item_ids)}

    def style(self, item_id: str) -> np.ndarray:
        try:
            return self.styles[self._index[item_id]]
        except KeyError:
            raise ItemLookupError(f"item {item_id!r} is not part of this world") from None

    def to_json(self) -> dict:
        return {
            "config": asdict(self.config),
            "seed": self.seed,
            "categories": self.categories,
            "items": [
                {"item_id": k, "category": int(c), "style": [float(x) for x in s]}
                for k, c, s in zip(self.item_ids, self.item_category, self.styles)
            ],
        }

    @classmethod
    def from_json(cls, rec: dict) -> "PlantedWorld":
        items = rec["items"]
        return cls(
            WorldConfig(**rec["config"]),
            rec["seed"],
            list(rec["categories"]),
            [it["item_id"] for it in items],
            np.array([it["category"] for it in items], dtype=np.int64),
            np.array([it["style"] for it in items], dtype=np.float64).reshape(len(items), -1),
        )


def oracle_score(outfit: Outfit | Sequence[str], world: PlantedWorld) -> float:
    """Negative mean pairwise distance between hidden styles (0 is best)."""
    ids = [it.item_id for it in outfit.items] if isinstance(outfit, Outfit) else list(outfit)
    styles = [world.style(k) for k in ids]
    if len(styles) < 2:
        return 0.0
    dists = [np.linalg.norm(a - b) for a, b in combinations(styles, 2)]
    return -float(np.mean(dists))


@dataclass(eq=False)
class SyntheticData:
    world: PlantedWorld
    outfits: list[Outfit]
    visual: FeatureStore
    textual: FeatureStore
    items: dict[str, Item]

    def write(self, outdir) -> dict[str, Path]:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "corpus": out / "corpus.jsonl",
            "visual": out / "visual.feat",
            "textual": out / "textual.feat",
            "world": out / "world.json",
        }
        write_corpus(self.outfits, paths["corpus"])
        write_dense_features(self.visual, paths["visual"])
        write_dense_features(self.textual, paths["textual"])
        paths["world"].write_text(json.dumps(self.world.to_json(), sort_keys=True))
        return paths


def generate(config: WorldConfig | None = None, seed: int = 0) -> SyntheticData:
    config = config or WorldConfig()
    problems = config.problems()
    if problems:
        raise GenerationError("; ".join(problems))
    rng = stream(seed, "synthetic")
    C, P, k = config.n_categories, config.items_per_category, config.style_dim

    categories = [f"cat{c:02d}" for c in range(C)]
    item_cat = np.repeat(np.arange(C), P)
    item_ids = [f"c{c:02d}_i{j:03d}" for c in range(C) for j in range(P)]
    styles = rng.normal(size=(C * P, k))
    world = PlantedWorld(config, seed, categories, item_ids, item_cat, styles)

    popularity = 1.0 / np.arange(1, C + 1) ** config.popularity_skew
    popularity = rng.permutation(popularity / popularity.sum())

    # two observable views
    vis_proj = rng.normal(size=(C, config.visual_dim, k)) / np.sqrt(k)
    txt_proj = rng.normal(size=(config.textual_dim, k)) / np.sqrt(k)
    txt_offset = rng.normal(size=config.textual_dim) * 0.5
    visual = np.einsum("ifk,ik->if", vis_proj[item_cat], styles)
    visual += rng.normal(scale=config.visual_noise, size=visual.shape)
    visual = visual.astype(np.float32).astype(np.float64)  # what the feature file stores
    text_score = styles @ txt_proj.T + txt_offset + rng.normal(scale=config.textual_noise, size=(C * P, config.textual_dim))
    textual = (text_score > 0).astype(np.float64)

    items = {}
    for i, key in enumerate(item_ids):
        words = " ".join(f"tok{b:02d}" for b in np.flatnonzero(textual[i]))
        items[key] = Item(key, categories[item_cat[i]], f"{categories[item_cat[i]]} {words}".strip())

    by_cat = [np.flatnonzero(item_cat == c) for c in range(C)]
    sizes = np.array(sorted(s for s in SIZE_WEIGHTS if config.min_size <= s <= config.max_size))
    size_p = np.array([SIZE_WEIGHTS[s] for s in sizes], dtype=float)
    size_p /= size_p.sum()

    wanted = {"train": config.n_train, "valid": config.n_valid, "test": config.n_test}
    total = sum(wanted.values())
    seen: set[frozenset[int]] = set()
    outfits: list[Outfit] = []
    split_plan = [s for s, n in wanted.items() for _ in range(n)]
    attempts, limit = 0, 50 * total + 1000
    while len(outfits) < total:
        attempts += 1
        if attempts > limit:
            raise GenerationError(
                f"only {len(outfits)} of {total} positive outfits found in {limit} attempts; "
                "loosen max_dispersion or raise items_per_category"
            )
        size = int(rng.choice(sizes, p=size_p))
        cats = rng.choice(C, size=size, replace=False, p=popularity)
        anchor = int(rng.choice(by_cat[cats[0]]))
        members = [anchor]
        for c in cats[1:]:
            pool = by_cat[c]
            dist = np.linalg.norm(styles[pool] - styles[anchor], axis=1)
            near = pool[np.argsort(dist, kind="stable")[:config.neighbours]]
            members.append(int(rng.choice(near)))
        key = frozenset(members)
        if key in seen:
            continue
        ids = [item_ids[m] for m in members]
        if -oracle_score(ids, world) > config.max_dispersion:
            continue
        seen.add(key)
        split = split_plan[len(outfits)]
        outfits.append(Outfit(f"o{len(outfits):05d}", tuple(items[x] for x in ids), split))

    return SyntheticData(
        world,
        outfits,
        FeatureStore("visual", config.visual_dim, list(item_ids), visual),
        FeatureStore("textual", config.textual_dim, list(item_ids), textual),
        items,
    )


def load_world(path) -> PlantedWorld:
    return PlantedWorld.from_json(json.loads(Path(path).read_text()))
