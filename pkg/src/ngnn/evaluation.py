"""Fill-in-the-blank accuracy and pairwise compatibility AUC."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import Item, Outfit, item_from_json, outfit_from_json
from .errors import SamplingError
from .features import FeatureStore
from .model import CompatibilityModel

logger = logging.getLogger(__name__)

Scorer = Callable[[Sequence[Outfit]], np.ndarray]
N_CANDIDATES = 4


@dataclass(frozen=True)
class FitbQuestion:
    outfit: Outfit        # the original, complete outfit
    slot: int             # blanked position
    candidates: tuple[Item, ...]
    answer: int           # index of the true item in ``candidates``

    def filled(self) -> list[Outfit]:
        return [self.outfit.replace_item(self.slot, c) for c in self.candidates]

    def to_json(self) -> dict:
        return {"outfit": self.outfit.to_json(), "slot": self.slot,
                "candidates": [c.to_json() for c in self.candidates], "answer": self.answer}

    @classmethod
    def from_json(cls, rec: dict) -> "FitbQuestion":
        return cls(outfit_from_json(rec["outfit"]), int(rec["slot"]),
                   tuple(item_from_json(c, "candidate") for c in rec["candidates"]), int(rec["answer"]))


@dataclass(frozen=True)
class EvalPair:
    positive: Outfit
    negative: Outfit

    def to_json(self) -> dict:
        return {"positive": self.positive.to_json(), "negative": self.negative.to_json()}

    @classmethod
    def from_json(cls, rec: dict) -> "EvalPair":
        return cls(outfit_from_json(rec["positive"]), outfit_from_json(rec["negative"]))


@dataclass(frozen=True)
class MetricResult:
    name: str
    value: float
    ties: int
    count: int


def _draw(pool: Sequence[Item], rng: np.random.Generator, ok: Callable[[Item], bool], max_retries: int,
          what: str) -> Item:
    for _ in range(max_retries):
        cand = pool[int(rng.integers(len(pool)))]
        if ok(cand):
            return cand
    raise SamplingError(f"item pool too small: no valid {what} after {max_retries} draws")


def build_fitb_set(test_outfits: Sequence[Outfit], pool: Sequence[Item], rng: np.random.Generator,
                   same_category: bool = False, max_retries: int = 10000) -> list[FitbQuestion]:
    """One question per outfit: a uniformly chosen slot is blanked and three
    distinct negatives are drawn from ``pool``, redrawing any whose category
    clashes with the remaining items. Candidate order is shuffled."""
    if not test_outfits:
        raise SamplingError("no test outfits to build questions from")
    if not pool:
        raise SamplingError("empty item pool")
    questions = []
    for o in test_outfits:
        slot = int(rng.integers(len(o)))
        truth = o.items[slot]
        taken = {it.category for k, it in enumerate(o.items) if k != slot}
        chosen = [truth]
        ids = {truth.item_id}
        for _ in range(N_CANDIDATES - 1):
            if same_category:
                ok = lambda c: c.item_id not in ids and c.category == truth.category
            else:
                ok = lambda c: c.item_id not in ids and c.category not in taken
            neg = _draw(pool, rng, ok, max_retries, f"negative for outfit {o.outfit_id}")
            chosen.append(neg)
            ids.add(neg.item_id)
        order = rng.permutation(N_CANDIDATES)
        cands = tuple(chosen[k] for k in order)
        questions.append(FitbQuestion(o, slot, cands, int(np.flatnonzero(order == 0)[0])))
    return questions


def fitb_accuracy(questions: Sequence[FitbQuestion], scorer: Scorer) -> MetricResult:
    """Share of questions where the top-scored candidate is the true one.

    Ties go to the lowest candidate index; the number of questions with a
    tied maximum is reported.
    """
    if not questions:
        return MetricResult("fitb", 0.0, 0, 0)
    filled = [o for q in questions for o in q.filled()]
    scores = np.asarray(scorer(filled), dtype=np.float64).reshape(len(questions), N_CANDIDATES)
    picks = np.argmax(scores, axis=1)
    top = scores.max(axis=1, keepdims=True)
    ties = int(np.sum((scores == top).sum(axis=1) > 1))
    answers = np.array([q.answer for q in questions])
    if ties:
        logger.info("fitb: %d of %d questions had tied top scores", ties, len(questions))
    return MetricResult("fitb", float(np.mean(picks == answers)), ties, len(questions))


def build_auc_set(test_outfits: Sequence[Outfit], pool: Sequence[Item], rng: np.random.Generator,
                  max_retries: int = 10000) -> list[EvalPair]:
    """Pair every outfit with |s| random pool items of distinct categories."""
    if not test_outfits:
        raise SamplingError("no test outfits to build pairs from")
    if not pool:
        raise SamplingError("empty item pool")
    pairs = []
    for o in test_outfits:
        items: list[Item] = []
        cats: set[str] = set()
        for _ in range(len(o)):
            it = _draw(pool, rng, lambda c: c.category not in cats, max_retries,
                       f"item for the negative of outfit {o.outfit_id}")
            items.append(it)
            cats.add(it.category)
        pairs.append(EvalPair(o, Outfit(f"{o.outfit_id}-neg", tuple(items), o.split)))
    return pairs


def auc(pairs: Sequence[EvalPair], scorer: Scorer) -> MetricResult:
    """Fraction of pairs whose positive scores strictly higher; ties count zero."""
    if not pairs:
        return MetricResult("auc", 0.0, 0, 0)
    scores = np.asarray(scorer([p.positive for p in pairs] + [p.negative for p in pairs]), dtype=np.float64)
    pos, neg = scores[:len(pairs)], scores[len(pairs):]
    ties = int(np.sum(pos == neg))
    if ties:
        logger.info("auc: %d of %d pairs tied", ties, len(pairs))
    return MetricResult("auc", float(np.mean(pos > neg)), ties, len(pairs))


def model_scorer(model: CompatibilityModel, features: Mapping[str, FeatureStore]) -> Scorer:
    return lambda outfits: model.score(list(outfits), features)


def dump_set(records: Sequence[FitbQuestion | EvalPair]) -> str:
    return "".join(json.dumps(r.to_json(), sort_keys=True, ensure_ascii=False) + "\n" for r in records)


def write_set(records, path) -> str:
    text = dump_set(records)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def read_fitb_set(path) -> list[FitbQuestion]:
    with open(path, encoding="utf-8") as fh:
        return [FitbQuestion.from_json(json.loads(line)) for line in fh if line.strip()]


def read_auc_set(path) -> list[EvalPair]:
    with open(path, encoding="utf-8") as fh:
        return [EvalPair.from_json(json.loads(line)) for line in fh if line.strip()]


def set_digest(records) -> str:
    return hashlib.sha256(dump_set(records).encode("utf-8")).hexdigest()


def report(result: MetricResult, seed: int | None, checkpoint_hash: str | None, eval_set_hash: str) -> dict:
    return {
        "metric": result.name,
        "value": result.value,
        "ties": result.ties,
        "count": result.count,
        "seed": seed,
        "checkpoint_hash": checkpoint_hash,
        "eval_set_hash": eval_set_hash,
    }
