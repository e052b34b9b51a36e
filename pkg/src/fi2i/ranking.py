"""Candidate rankers and tie-aware ranked lists."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .eir import EirModel
from .fisher import fc_scores, fd_scores
from .similarity import DistanceFn

__all__ = [
    "RankedCandidates",
    "Ranker",
    "SimilarityRanker",
    "EirRanker",
    "FisherDistanceRanker",
    "FisherConditionalRanker",
    "BlendRanker",
    "OracleRanker",
    "rank_candidates",
]


@dataclass(frozen=True)
class RankedCandidates:
    """Candidates in rank order.

    ``keys`` are non-decreasing (lower is better, i.e. distances or negated
    similarities).  ``groups[p]`` numbers the tie group at position ``p``;
    equal keys share a group.  Inside a group items are ordered by index.
    """

    items: np.ndarray
    scores: np.ndarray
    keys: np.ndarray
    groups: np.ndarray
    truth: int | None = None

    def __len__(self) -> int:
        return len(self.items)

    def position(self, j: int) -> int:
        hit = np.flatnonzero(self.items == j)
        if len(hit) != 1:
            raise ValueError(f"item {j} is not among the ranked candidates")
        return int(hit[0])

    def rank(self, j: int) -> int:
        """1-based rank with ties broken by item index."""
        return self.position(j) + 1


class Ranker:
    """Scores candidates following a conditioning item.

    ``ascending`` tells whether lower scores rank first.
    """

    name = "ranker"
    ascending = True

    def scores(self, i: int, cands: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def score_event(self, i: int, cands: np.ndarray, truth: int | None = None) -> np.ndarray:
        return self.scores(i, cands)

    def keys(self, i: int, cands: np.ndarray, truth: int | None = None) -> np.ndarray:
        s = np.asarray(self.score_event(i, cands, truth), dtype=np.float64)
        return s if self.ascending else -s


class SimilarityRanker(Ranker):
    """Rank by a raw baseline similarity (cosine, Jaccard, ECP, content)."""

    ascending = False

    def __init__(self, distance: DistanceFn, name: str | None = None):
        self.distance = distance
        self.name = name or distance.kind.value

    def scores(self, i, cands):
        # ECP(c | i) for ECP; symmetric measures don't care about direction
        return self.distance.similarity([i], cands)[0]


class EirRanker(Ranker):
    ascending = False

    def __init__(self, model: EirModel, name: str = "eir"):
        self.model = model
        self.name = name

    def scores(self, i, cands):
        return self.model.scores(i, cands)


class FisherDistanceRanker(Ranker):
    def __init__(self, model, name: str = "fd"):
        self.model = model
        self.name = name

    def scores(self, i, cands):
        return fd_scores(i, cands, self.model)


class FisherConditionalRanker(Ranker):
    def __init__(self, model, name: str = "fc", combine: str = "sum"):
        self.model = model
        self.name = name
        self.combine = combine

    def scores(self, i, cands):
        return fc_scores(i, cands, self.model, self.combine)


def _znorm(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    if sd == 0 or not np.isfinite(sd):
        return np.zeros_like(x)
    return (x - x.mean()) / sd


class BlendRanker(Ranker):
    """Weighted sum of per-candidate-set z-scores of other rankers' keys."""

    def __init__(self, parts: Sequence[tuple[Ranker, float]], name: str = "blend"):
        if not parts:
            raise ValueError("blend needs at least one ranker")
        self.parts = list(parts)
        self.name = name

    def score_event(self, i, cands, truth=None):
        total = np.zeros(len(cands))
        for ranker, weight in self.parts:
            total += weight * _znorm(ranker.keys(i, cands, truth))
        return total

    def scores(self, i, cands):
        return self.score_event(i, cands)


class OracleRanker(Ranker):
    """Debug ranker that puts the true next item first and ties the rest."""

    name = "oracle"
    ascending = True

    def score_event(self, i, cands, truth=None):
        if truth is None:
            raise ValueError("the oracle ranker needs the true item")
        return np.where(np.asarray(cands) == truth, 0.0, 1.0)

    def scores(self, i, cands):
        raise ValueError("the oracle ranker needs the true item")


def rank_candidates(i: int, cands, ranker: Ranker, truth: int | None = None) -> RankedCandidates:
    cands = np.asarray(cands, dtype=np.int64)
    if len(cands) == 0:
        raise ValueError("no candidates to rank")
    if np.any(cands == i):
        raise ValueError("candidates must not include the conditioning item")
    scores = np.asarray(ranker.score_event(i, cands, truth), dtype=np.float64)
    keys = scores if ranker.ascending else -scores
    order = np.lexsort((cands, keys))
    k = keys[order]
    groups = np.concatenate([[0], np.cumsum(k[1:] != k[:-1])])
    return RankedCandidates(cands[order], scores[order], k, groups, truth)
