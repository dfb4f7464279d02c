"""Outfit records and the JSON-lines corpus format.

One JSON object per line::

    {"outfit_id": "o17", "split": "train",
     "items": [{"item_id": "i3", "category": "jeans", "title": "blue denim jeans"}, ...]}

``split`` is one of ``train``, ``valid``, ``test``. Items may carry an
optional ``features`` object mapping a modality name to a feature-store key;
when absent the item id is the key.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Iterable

from .errors import IngestionError

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")


@dataclass(frozen=True)
class Item:
    item_id: str
    category: str
    title: str = ""
    feature_keys: tuple[tuple[str, str], ...] = ()

    def feature_key(self, modality: str) -> str:
        for name, key in self.feature_keys:
            if name == modality:
                return key
        return self.item_id

    def to_json(self) -> dict:
        rec = {"item_id": self.item_id, "category": self.category, "title": self.title}
        if self.feature_keys:
            rec["features"] = dict(self.feature_keys)
        return rec


@dataclass(frozen=True)
class Outfit:
    outfit_id: str
    items: tuple[Item, ...]
    split: str = "train"

    def __len__(self):
        return len(self.items)

    @property
    def categories(self) -> list[str]:
        return [it.category for it in self.items]

    def replace_item(self, slot: int, item: Item) -> "Outfit":
        items = list(self.items)
        items[slot] = item
        return Outfit(self.outfit_id, tuple(items), self.split)

    def to_json(self) -> dict:
        return {
            "outfit_id": self.outfit_id,
            "split": self.split,
            "items": [it.to_json() for it in self.items],
        }


def item_from_json(rec: dict, where: str) -> Item:
    try:
        item_id = str(rec["item_id"])
        category = str(rec["category"])
    except (KeyError, TypeError):
        raise IngestionError(f"{where}: item needs 'item_id' and 'category'") from None
    feats = rec.get("features") or {}
    if not isinstance(feats, dict):
        raise IngestionError(f"{where}: 'features' must be an object")
    return Item(item_id, category, str(rec.get("title", "")), tuple(sorted((str(k), str(v)) for k, v in feats.items())))


def outfit_from_json(rec: dict, where: str = "record") -> Outfit:
    if not isinstance(rec, dict) or "items" not in rec or "outfit_id" not in rec:
        raise IngestionError(f"{where}: outfit needs 'outfit_id' and 'items'")
    split = rec.get("split", "train")
    if split not in SPLITS:
        raise IngestionError(f"{where}: unknown split {split!r}")
    items = tuple(item_from_json(it, where) for it in rec["items"])
    return Outfit(str(rec["outfit_id"]), items, split)


def read_corpus(path) -> list[Outfit]:
    outfits = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestionError(f"{path}:{lineno}: {exc.msg}") from None
            outfits.append(outfit_from_json(rec, f"{path}:{lineno}"))
    return outfits


def write_corpus(outfits: Iterable[Outfit], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for o in outfits:
            fh.write(json.dumps(o.to_json(), sort_keys=True, ensure_ascii=False))
            fh.write("\n")


def split_corpus(outfits: Iterable[Outfit]) -> dict[str, list[Outfit]]:
    parts: dict[str, list[Outfit]] = {s: [] for s in SPLITS}
    for o in outfits:
        parts[o.split].append(o)
    return parts


def dedupe_categories(outfit: Outfit) -> Outfit:
    """Keep the first item of each category, dropping later repeats."""
    seen: set[str] = set()
    kept = []
    for it in outfit.items:
        if it.category in seen:
            continue
        seen.add(it.category)
        kept.append(it)
    if len(kept) != len(outfit.items):
        logger.warning("outfit %s: dropped %d item(s) with repeated categories",
                       outfit.outfit_id, len(outfit.items) - len(kept))
    return Outfit(outfit.outfit_id, tuple(kept), outfit.split)


def item_pool(outfits: Iterable[Outfit]) -> list[Item]:
    """Distinct items in first-seen order."""
    seen: dict[str, Item] = {}
    for o in outfits:
        for it in o.items:
            seen.setdefault(it.item_id, it)
    return list(seen.values())

