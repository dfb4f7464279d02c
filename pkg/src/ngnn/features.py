"""Item features: title bag-of-words vectors and dense feature files.

Dense feature file layout (all integers little-endian)::

    magic     4 bytes  b"NGFT"
    version   u16      1
    modality  u8       0 = visual, 1 = textual
    reserved  u8       0
    count     u32      number of items
    dim       u32      floats per item
    ids       count x (u32 byte length, UTF-8 bytes)
    rows      count x dim float32, row-major, same order as ids

Values are widened to float64 on load.
"""

from __future__ import annotations

import re
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import FormatError, IngestionError, ItemLookupError

MAGIC = b"NGFT"
VERSION = 1
MODALITIES = ("visual", "textual")
_HEADER = struct.Struct("<4sHBBII")

MIN_DOC_FREQ = 5
MIN_WORD_LEN = 3

_TOKEN = re.compile(r"[0-9a-z]+")


def tokenize(title: str) -> list[str]:
    """Lowercase, then split on runs of non-alphanumeric characters."""
    return _TOKEN.findall(title.lower())


@dataclass(frozen=True)
class TextVocab:
    words: tuple[str, ...]
    doc_freq: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})

    def __len__(self):
        return len(self.words)

    def index(self, word: str) -> int | None:
        return self._index.get(word)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("word\tindex\tdoc_freq\n")
            for i, (w, n) in enumerate(zip(self.words, self.doc_freq)):
                fh.write(f"{w}\t{i}\t{n}\n")


def build_text_vocab(titles: Iterable[str], min_doc_freq: int = MIN_DOC_FREQ,
                     min_len: int = MIN_WORD_LEN) -> TextVocab:
    """Words in at least ``min_doc_freq`` titles and at least ``min_len``
    characters long, sorted alphabetically."""
    df: Counter[str] = Counter()
    n_titles = 0
    for t in titles:
        n_titles += 1
        df.update(set(tokenize(t)))
    if n_titles == 0:
        raise IngestionError("cannot build a text vocabulary from zero titles")
    frequent = [w for w, n in df.items() if n >= min_doc_freq]
    kept = sorted(w for w in frequent if len(w) >= min_len)
    return TextVocab(tuple(kept), tuple(df[w] for w in kept))


def encode_text(title: str, vocab: TextVocab) -> np.ndarray:
    v = np.zeros(len(vocab))
    for w in tokenize(title):
        i = vocab.index(w)
        if i is not None:
            v[i] = 1.0
    return v


@dataclass
class FeatureStore:
    modality: str
    dim: int
    ids: list[str] = field(default_factory=list)
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise FormatError(f"unknown modality {self.modality!r}")
        if self.matrix is None:
            self.matrix = np.zeros((0, self.dim))
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.shape != (len(self.ids), self.dim):
            raise FormatError(f"expected a {len(self.ids)}x{self.dim} matrix, found {self.matrix.shape}")
        if self.modality == "textual" and not np.isin(self.matrix, (0.0, 1.0)).all():
            raise FormatError("textual features must be Boolean (0/1)")
        self._index = {k: i for i, k in enumerate(self.ids)}
        if len(self._index) != len(self.ids):
            raise FormatError("duplicate item ids in feature store")

    def __len__(self):
        return len(self.ids)

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def get(self, key: str) -> np.ndarray:
        try:
            return self.matrix[self._index[key]]
        except KeyError:
            raise ItemLookupError(f"no {self.modality} features for item {key!r}") from None

    def rows(self, keys: Sequence[str]) -> np.ndarray:
        try:
            idx = [self._index[k] for k in keys]
        except KeyError as exc:
            raise ItemLookupError(f"no {self.modality} features for item {exc.args[0]!r}") from None
        return self.matrix[idx]

    @classmethod
    def from_mapping(cls, modality: str, vectors: Mapping[str, np.ndarray], dim: int | None = None) -> "FeatureStore":
        ids = list(vectors)
        if dim is None:
            dim = len(next(iter(vectors.values()))) if ids else 0
        mat = np.array([np.asarray(vectors[k], dtype=np.float64) for k in ids]).reshape(len(ids), dim)
        return cls(modality, dim, ids, mat)


def write_dense_features(store: FeatureStore, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, MODALITIES.index(store.modality), 0, len(store.ids), store.dim))
        for k in store.ids:
            b = k.encode("utf-8")
            fh.write(struct.pack("<I", len(b)))
            fh.write(b)
        fh.write(np.ascontiguousarray(store.matrix, dtype="<f4").tobytes())


def load_dense_features(path, expected_dim: int | None = None) -> FeatureStore:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, mod, _, count, dim = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if mod >= len(MODALITIES):
        raise FormatError(f"{path}: unknown modality tag {mod}")
    if expected_dim is not None and dim != expected_dim:
        raise FormatError(f"{path}: expected dimension {expected_dim}, found {dim}")
    pos = _HEADER.size
    ids = []
    for _ in range(count):
        if pos + 4 > len(buf):
            raise FormatError(f"{path}: truncated id table")
        (n,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        ids.append(buf[pos:pos + n].decode("utf-8"))
        pos += n
    payload = len(buf) - pos
    if payload != count * dim * 4:
        raise FormatError(
            f"{path}: expected {count} rows of dimension {dim} ({count * dim} floats), "
            f"found {payload / 4:g} floats"
        )
    mat = np.frombuffer(buf, dtype="<f4", count=count * dim, offset=pos).astype(np.float64).reshape(count, dim)
    return FeatureStore(MODALITIES[mod], dim, ids, mat)


def text_features(items, vocab: TextVocab) -> FeatureStore:
    """Boolean title vectors for ``items`` keyed by their textual feature key."""
    vectors = {}
    for it in items:
        vectors.setdefault(it.feature_key("textual"), encode_text(it.title, vocab))
    return FeatureStore.from_mapping("textual", vectors, dim=len(vocab))
