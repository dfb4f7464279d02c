"""Category vocabulary, the weighted category co-occurrence graph, and
per-outfit subgraphs."""

from __future__ import annotations

import hashlib
import logging
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .corpus import Item, Outfit, dedupe_categories
from .errors import EmptyGraphError, IngestionError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_KEEP_THRESHOLD = 100
MIN_OUTFIT_SIZE = 3
MAX_OUTFIT_SIZE = 8


@dataclass(frozen=True)
class CategoryVocab:
    categories: tuple[str, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(self.categories)})

    def __len__(self):
        return len(self.categories)

    def __contains__(self, category: str) -> bool:
        return category in self._index

    def index(self, category: str) -> int:
        try:
            return self._index[category]
        except KeyError:
            raise ValidationError(f"category {category!r} is not in the vocabulary") from None


def build_vocab(corpus: Sequence[Outfit], keep_threshold: int = DEFAULT_KEEP_THRESHOLD) -> CategoryVocab:
    """Keep categories occurring strictly more than ``keep_threshold`` times.

    Ordered by descending count, ties broken by category name.
    """
    if not corpus:
        raise IngestionError("cannot build a vocabulary from an empty corpus")
    counts = Counter(it.category for o in corpus for it in o.items)
    kept = sorted(((c, n) for c, n in counts.items() if n > keep_threshold), key=lambda cn: (-cn[1], cn[0]))
    return CategoryVocab(tuple(c for c, _ in kept), tuple(n for _, n in kept))


def filter_corpus(corpus: Sequence[Outfit], vocab: CategoryVocab,
                  min_size: int = MIN_OUTFIT_SIZE, max_size: int = MAX_OUTFIT_SIZE) -> list[Outfit]:
    """Dedupe categories, drop out-of-vocab items, then drop outfits outside
    ``[min_size, max_size]``."""
    out = []
    too_big = 0
    for o in corpus:
        o = dedupe_categories(o)
        items = tuple(it for it in o.items if it.category in vocab)
        if len(items) < min_size:
            continue
        if len(items) > max_size:
            too_big += 1
            continue
        out.append(Outfit(o.outfit_id, items, o.split))
    if too_big:
        logger.warning("dropped %d outfit(s) with more than %d items", too_big, max_size)
    return out


@dataclass(frozen=True, eq=False)
class FashionGraph:
    """Directed weighted category graph.

    ``adjacency[i, j]`` is the weight of the edge from category ``i`` to
    category ``j``; rows with any edge sum to one.
    """

    vocab: CategoryVocab
    occurrence: np.ndarray   # (N,) outfits containing each category
    cooccurrence: np.ndarray  # (N, N) symmetric, zero diagonal
    adjacency: np.ndarray    # (N, N)

    @property
    def num_nodes(self) -> int:
        return len(self.vocab)

    def edges(self) -> list[tuple[int, int]]:
        src, dst = np.nonzero(self.adjacency)
        return list(zip(src.tolist(), dst.tolist()))

    @property
    def num_edges(self) -> int:
        return int(np.count_nonzero(self.adjacency))

    def edge_index(self) -> np.ndarray:
        """(N, N) table mapping each edge to its position in :meth:`edges`, -1 elsewhere."""
        table = np.full(self.adjacency.shape, -1, dtype=np.int64)
        for k, (i, j) in enumerate(self.edges()):
            table[i, j] = k
        return table

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update("\x1f".join(self.vocab.categories).encode())
        h.update(np.ascontiguousarray(self.adjacency, dtype="<f8").tobytes())
        return h.hexdigest()

    def write_edges(self, path) -> None:
        cats = self.vocab.categories
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("source\ttarget\tweight\n")
            for i, j in self.edges():
                fh.write(f"{cats[i]}\t{cats[j]}\t{self.adjacency[i, j]:.17g}\n")


def vocab_digest(vocab: CategoryVocab) -> str:
    return hashlib.sha256("\x1f".join(vocab.categories).encode()).hexdigest()


def build_graph(corpus: Sequence[Outfit], vocab: CategoryVocab) -> FashionGraph:
    """Co-occurrence counts and normalized directed edge weights.

    A pair of categories contributes at most once per outfit.
    """
    n = len(vocab)
    occ = np.zeros(n, dtype=np.int64)
    co = np.zeros((n, n), dtype=np.int64)
    for o in corpus:
        idx = sorted({vocab.index(c) for c in o.categories if c in vocab})
        for i in idx:
            occ[i] += 1
        for i, j in combinations(idx, 2):
            co[i, j] += 1
            co[j, i] += 1
    if n == 0 or not occ.any():
        raise EmptyGraphError("corpus and vocabulary share no categories")

    # ratio[i, j] = Count(i, j) / Count(j)
    ratio = np.zeros((n, n))
    nz = occ > 0
    ratio[:, nz] = co[:, nz] / occ[nz]
    row = ratio.sum(axis=1)
    adj = np.zeros((n, n))
    has = row > 0
    adj[has] = ratio[has] / row[has, None]
    for a in (occ, co, adj):
        a.setflags(write=False)
    return FashionGraph(vocab, occ, co, adj)


@dataclass(frozen=True, eq=False)
class OutfitSubgraph:
    items: tuple[Item, ...]
    nodes: np.ndarray      # (n,) category index of each item, item order
    adjacency: np.ndarray  # (n, n) global weights restricted to ``nodes``

    def __len__(self):
        return len(self.items)


def extract_subgraph(outfit: Outfit, graph: FashionGraph) -> OutfitSubgraph:
    nodes = np.array([graph.vocab.index(c) for c in outfit.categories], dtype=np.int64)
    if len(set(nodes.tolist())) != len(nodes):
        raise ValidationError(f"outfit {outfit.outfit_id}: repeated categories {outfit.categories}")
    return OutfitSubgraph(outfit.items, nodes, graph.adjacency[np.ix_(nodes, nodes)])


def graph_from_arrays(categories: Sequence[str], adjacency: np.ndarray) -> FashionGraph:
    """Rebuild a graph from stored weights (e.g. a checkpoint); counts are unknown and left zero."""
    n = len(categories)
    vocab = CategoryVocab(tuple(categories), (0,) * n)
    adj = np.array(adjacency, dtype=np.float64)
    adj.setflags(write=False)
    return FashionGraph(vocab, np.zeros(n, dtype=np.int64), np.zeros((n, n), dtype=np.int64), adj)


def complete_graph(n: int) -> FashionGraph:
    """``n`` categories, every ordered pair joined with unit weight."""
    cats = tuple(f"c{i:03d}" for i in range(n))
    adj = np.ones((n, n)) - np.eye(n)
    return graph_from_arrays(cats, adj)


def write_vocab(vocab: CategoryVocab, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("category\tindex\tcount\n")
        for i, (c, n) in enumerate(zip(vocab.categories, vocab.counts)):
            fh.write(f"{c}\t{i}\t{n}\n")
