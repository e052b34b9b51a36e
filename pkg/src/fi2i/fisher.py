"""Fisher scores, vectors, kernels and distances over item-to-sample distances.

An item ``i`` is described by its distances to a fixed set of anchor items
``S = (s_1, ..., s_N)``.  With an energy that is linear in those distances,
the gradient of ``log p(i)`` with respect to the weight of anchor ``k`` is
``mu_k - dist(i, s_k)``, where ``mu_k`` is the expected distance to ``s_k``.
The expectation is replaced by the empirical mean over a population of
items (all items by default), and the diagonal of the Fisher information by
the empirical variance, giving the Fisher vector

    v_i[k] = (mu_k - dist(i, s_k)) / sigma_k

Two recommenders come out of this:

* Fisher distance (FD): Euclidean distance between Fisher vectors, written
  through the kernel ``K(i, j) = <v_i, v_j>``.
* Fisher conditional score (FC): the norm of the conditional score
  ``(mu_k + mu_pair) - (dist(j, s_k) + dist(i, j))``, lower meaning ``j``
  fits better after ``i``.  ``mu_pair`` is the mean distance over random
  item pairs.

With several modalities the kernels add up, and the FC norms add up too
(``combine="sum"``).  ``combine="rss"`` instead takes the norm of the
concatenated score, for comparison.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._io import read_container, write_container
from .similarity import DistanceFn, SimilarityKind

log = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-6
DEFAULT_PAIR_SAMPLES = 100_000

__all__ = [
    "SampleSet",
    "FisherModality",
    "FisherModel",
    "select_samples",
    "fit_modality",
    "fisher_score_single",
    "fisher_vector",
    "fisher_kernel",
    "fisher_distance",
    "fc_score",
    "fd_scores",
    "fc_scores",
]


@dataclass(frozen=True)
class SampleSet:
    items: np.ndarray

    def __post_init__(self):
        items = np.asarray(self.items, dtype=np.int64)
        if items.ndim != 1 or len(items) == 0:
            raise ValueError("sample set needs at least one item")
        if len(np.unique(items)) != len(items):
            raise ValueError("sample items must be distinct")
        object.__setattr__(self, "items", items)

    def __len__(self) -> int:
        return len(self.items)


def select_samples(freq, n: int) -> SampleSet:
    """The ``n`` most frequent items, ties going to the lower index."""
    freq = np.asarray(freq)
    if n <= 0:
        raise ValueError(f"sample size must be positive, got {n}")
    if n > len(freq):
        raise ValueError(f"sample size {n} exceeds item count {len(freq)}")
    order = np.lexsort((np.arange(len(freq)), -freq))
    chosen = order[:n]
    if np.any(freq[chosen] <= 0):
        log.warning("sample set includes items with zero frequency")
    return SampleSet(chosen)


@dataclass
class FisherModality:
    """Fitted statistics for one distance.

    ``mean[k]`` and ``std[k]`` describe ``dist(x, samples[k])`` over the
    fitting population; ``pair_mean`` is the mean of ``dist(x, y)`` over
    random ordered pairs.
    """

    kind: SimilarityKind
    samples: SampleSet
    mean: np.ndarray
    std: np.ndarray
    pair_mean: float
    distance: DistanceFn | None = field(default=None, repr=False, compare=False)
    name: str = ""
    _vectors: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)
    _sample_dist: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.name:
            self.name = self.kind.value
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        n = len(self.samples)
        if self.mean.shape != (n,) or self.std.shape != (n,):
            raise ValueError("mean and std must have one entry per sample")
        if np.any(self.std <= 0):
            raise ValueError("std must be positive")

    def bind(self, distance: DistanceFn) -> "FisherModality":
        if distance.kind is not self.kind:
            raise ValueError(f"modality {self.name} is {self.kind.value}, got a {distance.kind.value} distance")
        self.distance = distance
        self._vectors = self._sample_dist = None
        return self

    def _dist(self) -> DistanceFn:
        if self.distance is None:
            raise RuntimeError(f"modality {self.name} has no distance bound")
        return self.distance

    def sample_distances(self, items=None) -> np.ndarray:
        """``dist(x, s_k)`` for the given items (all items when omitted), shape ``(len, N)``."""
        if self._sample_dist is None:
            d = self._dist()
            self._sample_dist = d.matrix(np.arange(d.n_items), self.samples.items)
        if items is None:
            return self._sample_dist
        return self._sample_dist[np.asarray(items)]

    def scores(self, items=None) -> np.ndarray:
        return self.mean - self.sample_distances(items)

    def vectors(self, items=None) -> np.ndarray:
        if self._vectors is None:
            self._vectors = (self.mean - self.sample_distances()) / self.std
        if items is None:
            return self._vectors
        return self._vectors[np.asarray(items)]

    def pair_distances(self, i: int, cands) -> np.ndarray:
        return self._dist().row(i, cands)


def _pair_mean(distance: DistanceFn, population: np.ndarray, n_pairs: int, seed: int) -> float:
    m = len(population)
    if m < 2:
        return 0.0
    if m * m <= n_pairs:
        full = distance.matrix(population, population)
        return float((full.sum() - np.trace(full)) / (m * (m - 1)))
    rng = np.random.default_rng(seed)
    a = rng.integers(0, m, size=n_pairs)
    b = rng.integers(0, m - 1, size=n_pairs)
    b = b + (b >= a)
    a, b = population[a], population[b]
    # group by first item so each block query stays one row
    order = np.argsort(a, kind="stable")
    a, b = a[order], b[order]
    vals = np.empty(n_pairs)
    starts = np.flatnonzero(np.r_[True, a[1:] != a[:-1]])
    ends = np.r_[starts[1:], n_pairs]
    for s, e in zip(starts, ends):
        vals[s:e] = distance.row(int(a[s]), b[s:e])
    return float(vals.mean())


def fit_modality(
    distance: DistanceFn,
    samples: SampleSet,
    population=None,
    pair_samples: int = DEFAULT_PAIR_SAMPLES,
    seed: int = 0,
    name: str = "",
) -> FisherModality:
    """Estimate per-sample distance means/stds and the pair-distance mean.

    ``population`` defaults to every item the distance knows about.  A zero
    standard deviation is floored at ``SIGMA_FLOOR`` with a warning.
    """
    if population is None:
        population = np.arange(distance.n_items)
    population = np.asarray(population, dtype=np.int64)
    if len(population) == 0:
        raise ValueError("fitting population is empty")
    d = distance.matrix(population, samples.items)
    mean = d.mean(axis=0)
    std = d.std(axis=0)
    low = std < SIGMA_FLOOR
    if low.any():
        log.warning(
            "%s: %d sample(s) with near-constant distances; std floored at %g",
            name or distance.kind.value,
            int(low.sum()),
            SIGMA_FLOOR,
        )
        std = np.where(low, SIGMA_FLOOR, std)
    pair_mean = _pair_mean(distance, population, pair_samples, seed)
    fitted = FisherModality(distance.kind, samples, mean, std, pair_mean, distance=distance, name=name)
    if len(population) == distance.n_items and np.array_equal(population, np.arange(distance.n_items)):
        fitted._sample_dist = d
    return fitted


class FisherModel:
    """One or more fitted modalities over the same items."""

    def __init__(self, modalities: Sequence[FisherModality]):
        self.modalities = list(modalities)
        if not self.modalities:
            raise ValueError("a Fisher model needs at least one modality")
        names = [m.name for m in self.modalities]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate modality names: {names}")

    def __iter__(self):
        return iter(self.modalities)

    def __len__(self) -> int:
        return len(self.modalities)

    def __getitem__(self, name: str) -> FisherModality:
        for m in self.modalities:
            if m.name == name:
                return m
        raise KeyError(f"no modality named {name!r}")

    def names(self) -> list[str]:
        return [m.name for m in self.modalities]

    def subset(self, names: Sequence[str]) -> "FisherModel":
        return FisherModel([self[n] for n in names])

    def save(self, path) -> None:
        meta = {"modalities": [{"name": m.name, "kind": m.kind.value} for m in self.modalities]}
        arrays = {}
        for k, m in enumerate(self.modalities):
            arrays[f"m{k}_samples"] = m.samples.items
            arrays[f"m{k}_mean"] = m.mean
            arrays[f"m{k}_std"] = m.std
            arrays[f"m{k}_pair_mean"] = np.array([m.pair_mean], dtype=np.float64)
        write_container(path, "fisher", meta, arrays)

    @classmethod
    def load(cls, path, resolve: Callable[[SimilarityKind], DistanceFn] | None = None) -> "FisherModel":
        """Read a model; ``resolve`` maps each modality's kind to a distance to bind."""
        meta, arr = read_container(path, "fisher")
        mods = []
        for k, info in enumerate(meta["modalities"]):
            m = FisherModality(
                SimilarityKind(info["kind"]),
                SampleSet(arr[f"m{k}_samples"]),
                arr[f"m{k}_mean"],
                arr[f"m{k}_std"],
                float(arr[f"m{k}_pair_mean"][0]),
                name=info["name"],
            )
            if resolve is not None:
                m.bind(resolve(m.kind))
            mods.append(m)
        return cls(mods)


def _modalities(model) -> list[FisherModality]:
    if isinstance(model, FisherModality):
        return [model]
    return list(model)


def fisher_score_single(i: int, modality: FisherModality) -> np.ndarray:
    return modality.scores([i])[0]


def fisher_vector(i: int, modality: FisherModality) -> np.ndarray:
    return modality.vectors([i])[0]


def fisher_kernel(i: int, j: int, model) -> float:
    """Diagonal-information Fisher kernel, summed over modalities."""
    total = 0.0
    for m in _modalities(model):
        v = m.vectors([i, j])
        total += float(np.dot(v[0], v[1]))
    return total


def fisher_distance(i: int, j: int, model) -> float:
    disc = fisher_kernel(i, i, model) - 2.0 * fisher_kernel(i, j, model) + fisher_kernel(j, j, model)
    return float(np.sqrt(max(disc, 0.0)))


def fd_scores(i: int, cands, model) -> np.ndarray:
    """Fisher distance from ``i`` to each candidate (same arithmetic as :func:`fisher_distance`)."""
    cands = np.asarray(cands)
    kii = 0.0
    kic = np.zeros(len(cands))
    kcc = np.zeros(len(cands))
    for m in _modalities(model):
        vi = m.vectors([i])[0]
        vc = m.vectors(cands)
        kii += float(np.dot(vi, vi))
        kic += vc @ vi
        kcc += np.einsum("ck,ck->c", vc, vc)
    disc = kii - 2.0 * kic + kcc
    return np.sqrt(np.maximum(disc, 0.0))


def _fc_norms(i: int, cands, modality: FisherModality) -> np.ndarray:
    cands = np.asarray(cands)
    expected = modality.mean + modality.pair_mean
    observed = modality.sample_distances(cands) + modality.pair_distances(i, cands)[:, None]
    g = expected - observed
    return np.sqrt(np.einsum("ck,ck->c", g, g))


def fc_scores(i: int, cands, model, combine: str = "sum") -> np.ndarray:
    """Fisher conditional score of each candidate following ``i``.

    ``combine="sum"`` adds per-modality norms; ``"rss"`` uses the norm of the
    concatenated score vector.
    """
    if combine not in ("sum", "rss"):
        raise ValueError(f"combine must be 'sum' or 'rss', got {combine!r}")
    cands = np.asarray(cands)
    if np.any(cands == i):
        raise ValueError("the conditioning item cannot be its own candidate")
    total = np.zeros(len(cands))
    for m in _modalities(model):
        norms = _fc_norms(i, cands, m)
        total += norms if combine == "sum" else norms * norms
    return total if combine == "sum" else np.sqrt(total)


def fc_score(j: int, i: int, model, combine: str = "sum") -> float:
    if i == j:
        raise ValueError("FC score is undefined for j == i")
    return float(fc_scores(i, [j], model, combine)[0])
