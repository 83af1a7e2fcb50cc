"""Exact flat vector index and threat-knowledge retrieval."""

from __future__ import annotations

import enum
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from ..errors import DimensionMismatch, DuplicateUnit, EmptyIndex
from . import _kernels
from .embed import Embedder, check_vector, serialize_sequence


class Metric(enum.Enum):
    COSINE = "cosine"
    INNER_PRODUCT = "ip"
    EUCLIDEAN = "euclid"

    @property
    def code(self) -> int:
        return {Metric.COSINE: _kernels.COSINE,
                Metric.INNER_PRODUCT: _kernels.INNER_PRODUCT,
                Metric.EUCLIDEAN: _kernels.EUCLIDEAN}[self]

    @classmethod
    def parse(cls, text: "str | Metric") -> "Metric":
        if isinstance(text, Metric):
            return text
        norm = str(text).strip().lower().replace("-", "_")
        aliases = {
            "cosine": cls.COSINE, "cos": cls.COSINE,
            "ip": cls.INNER_PRODUCT, "inner_product": cls.INNER_PRODUCT, "innerproduct": cls.INNER_PRODUCT,
            "dot": cls.INNER_PRODUCT,
            "euclid": cls.EUCLIDEAN, "euclidean": cls.EUCLIDEAN, "l2": cls.EUCLIDEAN,
        }
        try:
            return aliases[norm]
        except KeyError:
            raise ValueError(f"unknown metric {text!r}") from None


def similarity(a, b, metric: Metric | str = Metric.COSINE) -> float:
    """Higher is better for every metric; Euclidean is returned as negated distance."""
    metric = Metric.parse(metric)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    if metric is Metric.EUCLIDEAN:
        return -float(np.linalg.norm(a - b))
    dot = float(np.dot(a, b))
    if metric is Metric.INNER_PRODUCT:
        return dot
    denom = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
    return dot / denom if denom > 0 else 0.0


class VectorIndex:
    """Exact (brute-force) index. Single writer while building, then read-only."""

    def __init__(self, dim: int, metric: Metric | str = Metric.COSINE, use_numba: bool | None = None):
        self.dim = int(dim)
        self.metric = Metric.parse(metric)
        self.use_numba = use_numba
        self._ids: list[str] = []
        self._rows: list[np.ndarray] = []
        self._id_set: set[str] = set()
        self._matrix = np.zeros((0, self.dim))
        self._norms = np.zeros(0)
        self._rank = np.zeros(0, dtype=np.int64)
        self._dirty = False

    @classmethod
    def from_pairs(cls, pairs: Iterable, dim: int, metric: Metric | str = Metric.COSINE,
                   use_numba: bool | None = None) -> "VectorIndex":
        idx = cls(dim, metric, use_numba)
        for unit_id, vec in pairs:
            idx.add(unit_id, vec)
        return idx

    @classmethod
    def from_units(cls, units: Sequence, dim: int | None = None, metric: Metric | str = Metric.COSINE,
                   use_numba: bool | None = None) -> "VectorIndex":
        if dim is None:
            if not units:
                raise EmptyIndex("cannot infer dimension from an empty unit list")
            dim = len(units[0].vector)
        return cls.from_pairs(((u.unit_id, u.vector) for u in units), dim, metric, use_numba)

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def add(self, unit_id: str, vector) -> None:
        if unit_id in self._id_set:
            raise DuplicateUnit(f"unit id already indexed: {unit_id}")
        vec = check_vector(vector, self.dim)
        self._ids.append(unit_id)
        self._id_set.add(unit_id)
        self._rows.append(vec.astype(np.float64))
        self._dirty = True

    def _freeze(self) -> None:
        if not self._dirty:
            return
        self._matrix = np.ascontiguousarray(np.vstack(self._rows)) if self._rows else np.zeros((0, self.dim))
        self._norms = _kernels.row_norms(self._matrix, self.use_numba)
        order = sorted(range(len(self._ids)), key=self._ids.__getitem__)
        rank = np.empty(len(order), dtype=np.int64)
        rank[order] = np.arange(len(order))
        self._rank = rank
        self._dirty = False

    def scores(self, query) -> np.ndarray:
        if not self._ids:
            raise EmptyIndex("index is empty")
        q = np.asarray(query)
        if q.ndim != 1 or q.shape[0] != self.dim:
            raise DimensionMismatch(f"query dim {q.shape} vs index dim {self.dim}")
        self._freeze()
        return _kernels.score_rows(self._matrix, self._norms, q, self.metric.code, self.use_numba)

    def search(self, query, k: int = 1) -> list[tuple[str, float]]:
        """Exact top-k by score descending; ties go to the lexicographically smaller id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        scores = self.scores(query)
        order = np.lexsort((self._rank, -scores))[:k]
        return [(self._ids[i], float(scores[i])) for i in order]


def search(index: VectorIndex, query, k: int = 1) -> list[tuple[str, float]]:
    return index.search(query, k)


class Retrieved(NamedTuple):
    unit: object
    score: float


def retrieve(index: VectorIndex, units: Mapping | Sequence, events: Sequence,
             embedder: Embedder, k: int = 1) -> list[Retrieved]:
    lookup = units if isinstance(units, Mapping) else {u.unit_id: u for u in units}
    query = embedder.embed(serialize_sequence(events))
    return [Retrieved(lookup[uid], score) for uid, score in index.search(query, k)]


def threat_retrieve(index: VectorIndex, units: Mapping | Sequence, seq, embedder: Embedder) -> Retrieved:
    """Best-matching knowledge unit for a context sequence (argmax of similarity)."""
    return retrieve(index, units, seq.events, embedder, k=1)[0]
