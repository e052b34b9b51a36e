"""Baseline item similarities and the distances built from them.

Collaborative measures work on user counts from an
:class:`~fi2i.dataset.InteractionStore`: ``f_i`` (users with ``i``) and
``f_ij`` (users with both).  Cosine follows the form ``f_ij / (f_i f_j)``
rather than the usual ``f_ij / sqrt(f_i f_j)``; both rank the candidates
of a fixed item differently, so keep that in mind when comparing with
other libraries.
"""

from __future__ import annotations

import enum

import numpy as np

from .dataset import ContentBags, InteractionStore

__all__ = [
    "SimilarityKind",
    "cosine",
    "jaccard",
    "ecp",
    "content_jaccard",
    "sim_to_dist",
    "DistanceFn",
    "CooccurrenceDistance",
    "ContentDistance",
    "make_distance",
]


class SimilarityKind(enum.Enum):
    COSINE = "cosine"
    JACCARD = "jaccard"
    ECP = "ecp"
    CONTENT = "content"
    EIR = "eir"

    @property
    def symmetric(self) -> bool:
        return self is not SimilarityKind.ECP

    @property
    def is_distance(self) -> bool:
        """True when the raw value is already a distance (no ``1 - sim``)."""
        return self is SimilarityKind.EIR

    @property
    def value_range(self) -> tuple[float, float]:
        if self is SimilarityKind.EIR:
            return (0.0, np.inf)
        return (0.0, 1.0)

    @classmethod
    def parse(cls, name: str) -> "SimilarityKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = "|".join(k.value for k in cls)
            raise ValueError(f"unknown similarity kind {name!r}; expected {valid}") from None


def cosine(i: int, j: int, stats: InteractionStore) -> float:
    fi, fj = stats.freq[i], stats.freq[j]
    if fi == 0 or fj == 0:
        raise ValueError(f"cosine undefined for zero-frequency item ({i}: {fi}, {j}: {fj})")
    fij = stats.freq[i] if i == j else stats.pair_freq(i, j)
    return float(fij / (fi * fj))


def jaccard(i: int, j: int, stats: InteractionStore) -> float:
    fi, fj = stats.freq[i], stats.freq[j]
    fij = fi if i == j else stats.pair_freq(i, j)
    denom = fi + fj - fij
    if denom <= 0:
        raise ValueError(f"jaccard undefined for items {i}, {j}: f_i + f_j - f_ij = {denom}")
    return float(fij / denom)


def ecp(j: int, i: int, stats: InteractionStore) -> float:
    """Smoothed conditional probability of ``j`` following ``i``."""
    fi = stats.freq[i]
    fij = fi if i == j else stats.pair_freq(i, j)
    return float(fij / (fi + 1))


def content_jaccard(i: int, j: int, bags: ContentBags) -> float:
    a, b = bags.bag(i), bags.bag(j)
    union = len(a | b)
    if union == 0:
        return 0.0
    return len(a & b) / union


def sim_to_dist(kind: SimilarityKind, value: float) -> float:
    lo, hi = kind.value_range
    if not (lo <= value <= hi) or np.isnan(value):
        raise ValueError(f"{kind.value} value {value} outside [{lo}, {hi}]")
    if kind.is_distance:
        return float(value)
    return 1.0 - float(value)


class DistanceFn:
    """A distance bound to its statistics, evaluated in blocks.

    ``matrix(rows, cols)[r, c]`` is ``dist(rows[r], cols[c])``.  Symmetric
    kinds return exactly 0 on self pairs.
    """

    kind: SimilarityKind
    n_items: int

    def matrix(self, rows, cols) -> np.ndarray:
        raise NotImplementedError

    def pair(self, i: int, j: int) -> float:
        return float(self.matrix([i], [j])[0, 0])

    def row(self, i: int, cols) -> np.ndarray:
        return self.matrix([i], cols)[0]

    def _zero_self(self, rows, cols, dist):
        if self.kind.symmetric:
            dist[np.asarray(rows)[:, None] == np.asarray(cols)[None, :]] = 0.0
        return dist


class CooccurrenceDistance(DistanceFn):
    """``1 - sim`` over collaborative counts.

    Pairs where the similarity's denominator vanishes (an item nobody
    interacted with in training) get similarity 0, i.e. distance 1.
    """

    def __init__(self, kind: SimilarityKind, store: InteractionStore):
        if kind not in (SimilarityKind.COSINE, SimilarityKind.JACCARD, SimilarityKind.ECP):
            raise ValueError(f"{kind.value} is not a co-occurrence similarity")
        self.kind = kind
        self.store = store
        self.n_items = store.n_items
        self._freq = store.freq.astype(np.float64)

    def _counts(self, rows, cols) -> np.ndarray:
        rows, cols = np.asarray(rows), np.asarray(cols)
        if len(rows) > len(cols):
            # co-occurrence is symmetric; slicing the short side is cheaper
            return self.store.pair_freq_block(cols, rows).T.astype(np.float64)
        return self.store.pair_freq_block(rows, cols).astype(np.float64)

    def similarity(self, rows, cols) -> np.ndarray:
        rows, cols = np.asarray(rows), np.asarray(cols)
        fij = self._counts(rows, cols)
        fi = self._freq[rows][:, None]
        fj = self._freq[cols][None, :]
        if self.kind is SimilarityKind.ECP:
            return fij / (fi + 1.0)
        if self.kind is SimilarityKind.COSINE:
            denom = fi * fj
        else:
            denom = fi + fj - fij
        out = np.zeros_like(fij)
        np.divide(fij, denom, out=out, where=denom > 0)
        return out

    def matrix(self, rows, cols) -> np.ndarray:
        return self._zero_self(rows, cols, 1.0 - self.similarity(rows, cols))


class ContentDistance(DistanceFn):
    """``1 - Jaccard`` over entity bags; empty-vs-empty counts as distance 1."""

    kind = SimilarityKind.CONTENT

    def __init__(self, bags: ContentBags):
        self.bags = bags
        self.n_items = len(bags.vocab)
        self._m = bags.matrix.astype(np.float64).tocsr()
        self._sizes = bags.sizes.astype(np.float64)

    def similarity(self, rows, cols) -> np.ndarray:
        rows, cols = np.asarray(rows), np.asarray(cols)
        inter = (self._m[rows] @ self._m[cols].T).toarray()
        union = self._sizes[rows][:, None] + self._sizes[cols][None, :] - inter
        out = np.zeros_like(inter)
        np.divide(inter, union, out=out, where=union > 0)
        return out

    def matrix(self, rows, cols) -> np.ndarray:
        return self._zero_self(rows, cols, 1.0 - self.similarity(rows, cols))


def make_distance(kind, store: InteractionStore | None = None, bags: ContentBags | None = None, eir=None) -> DistanceFn:
    """Build the distance for ``kind`` from whichever source it needs."""
    if isinstance(kind, str):
        kind = SimilarityKind.parse(kind)
    if kind is SimilarityKind.CONTENT:
        if bags is None:
            raise ValueError("content distance needs content bags")
        return ContentDistance(bags)
    if kind is SimilarityKind.EIR:
        if eir is None:
            raise ValueError("eir distance needs a trained EIR model")
        from .eir import EirDistance

        return EirDistance(eir)
    if store is None:
        raise ValueError(f"{kind.value} distance needs an interaction store")
    return CooccurrenceDistance(kind, store)
