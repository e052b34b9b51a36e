"""Euclidean Item Recommender: item transitions through latent positions and biases.

The conditional model is ``p(j | i) ∝ exp(-||x_i - x_j||^2 + b_j)``.  It is
trained with a sampled softmax, where each observed pair ``(i, j)`` is
contrasted against uniformly drawn negative items.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._io import read_container, write_container
from .similarity import DistanceFn, SimilarityKind

log = logging.getLogger(__name__)

__all__ = [
    "EirConfig",
    "EirModel",
    "DivergenceError",
    "train_eir",
    "eir_score",
    "eir_distance",
    "sampled_softmax_loss",
    "EirDistance",
]


class DivergenceError(ArithmeticError):
    """Training produced non-finite parameters."""


@dataclass(frozen=True)
class EirConfig:
    dim: int = 20
    epochs: int = 30
    learning_rate: float = 0.05
    negatives: int = 20
    batch_size: int = 128
    init_scale: float = 0.1
    seed: int = 0


class EirModel:
    def __init__(self, vectors, bias):
        self.vectors = np.asarray(vectors, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        if self.vectors.ndim != 2 or self.bias.shape != (self.vectors.shape[0],):
            raise ValueError("vectors must be (M, d) and bias (M,)")
        if not (np.isfinite(self.vectors).all() and np.isfinite(self.bias).all()):
            raise ValueError("EIR parameters must be finite")

    @property
    def n_items(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def _check(self, *items):
        for i in items:
            if not 0 <= i < self.n_items:
                raise IndexError(f"item {i} not in EIR model of {self.n_items} items")

    def scores(self, i: int, cands) -> np.ndarray:
        """``eir_score(c | i)`` for every candidate ``c``."""
        self._check(i)
        cands = np.asarray(cands)
        diff = self.vectors[cands] - self.vectors[i]
        return -np.einsum("ij,ij->i", diff, diff) + self.bias[cands]

    def save(self, path) -> None:
        rec = np.zeros(self.n_items, dtype=[("index", "<i8"), ("bias", "<f8"), ("vector", "<f8", (self.dim,))])
        rec["index"] = np.arange(self.n_items)
        rec["bias"] = self.bias
        rec["vector"] = self.vectors
        write_container(path, "eir", {"dim": self.dim, "n_items": self.n_items}, {"items": rec})

    @classmethod
    def load(cls, path) -> "EirModel":
        meta, arr = read_container(path, "eir")
        rec = arr["items"]
        if len(rec) != meta["n_items"] or rec["vector"].shape[1:] != (meta["dim"],):
            raise ValueError(f"{path}: EIR header does not match payload")
        order = np.argsort(rec["index"], kind="stable")
        return cls(rec["vector"][order].reshape(len(rec), meta["dim"]), rec["bias"][order])


def eir_score(j: int, i: int, model: EirModel) -> float:
    model._check(i, j)
    d = model.vectors[i] - model.vectors[j]
    return float(-(d @ d) + model.bias[j])


def eir_distance(i: int, j: int, model: EirModel) -> float:
    model._check(i, j)
    d = model.vectors[i] - model.vectors[j]
    return float(d @ d)


def sampled_softmax_loss(vectors, bias, pairs, negatives):
    """Summed sampled-softmax loss and its gradients.

    ``pairs`` is ``(B, 2)`` with rows ``(i, j)``; ``negatives`` is ``(B, S)``.
    For each row the candidate set is ``[j, negatives...]`` and the loss is
    ``-s_j + logsumexp(s)`` with ``s_c = -||x_i - x_c||^2 + b_c``.
    Returns ``(loss, grad_vectors, grad_bias)``.
    """
    pairs = np.asarray(pairs)
    ctx = pairs[:, 0]
    cands = np.column_stack([pairs[:, 1], np.asarray(negatives)])
    diff = vectors[ctx][:, None, :] - vectors[cands]  # (B, S+1, d)
    s = -np.einsum("bcd,bcd->bc", diff, diff) + bias[cands]
    smax = s.max(axis=1, keepdims=True)
    e = np.exp(s - smax)
    z = e.sum(axis=1, keepdims=True)
    loss = float(np.sum(np.log(z[:, 0]) + smax[:, 0] - s[:, 0]))

    g = e / z
    g[:, 0] -= 1.0  # dL/ds
    gv = np.zeros_like(vectors)
    gb = np.zeros_like(bias)
    # ds/dx_i = -2 diff, ds/dx_c = +2 diff, ds/db_c = 1
    np.add.at(gv, ctx, -2.0 * np.einsum("bc,bcd->bd", g, diff))
    np.add.at(gv, cands.ravel(), (2.0 * g[:, :, None] * diff).reshape(-1, vectors.shape[1]))
    np.add.at(gb, cands.ravel(), g.ravel())
    return loss, gv, gb


def _draw_negatives(rng, ctx: np.ndarray, n_items: int, k: int) -> np.ndarray:
    # uniform over items other than the context item
    r = rng.integers(0, n_items - 1, size=(len(ctx), k))
    return r + (r >= ctx[:, None])


def train_eir(pairs, n_items: int, config: EirConfig = EirConfig()) -> EirModel:
    """Fit an :class:`EirModel` to training ``(i, j)`` pairs by minibatch SGD.

    Each minibatch applies the summed gradient, so the learning rate acts
    per example.  The rate decays linearly to zero over the run.
    """
    pairs = np.asarray(pairs, dtype=np.int64)
    if pairs.size == 0:
        raise ValueError("EIR training needs at least one pair")
    if n_items < 2:
        raise ValueError("EIR training needs at least two items")
    rng = np.random.default_rng(config.seed)
    vectors = rng.normal(0.0, config.init_scale, size=(n_items, config.dim))
    bias = np.zeros(n_items)

    n = len(pairs)
    bs = max(1, config.batch_size)
    steps_per_epoch = -(-n // bs)
    total = config.epochs * steps_per_epoch
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, bs):
            batch = pairs[order[start : start + bs]]
            neg = _draw_negatives(rng, batch[:, 0], n_items, config.negatives)
            lr = config.learning_rate * (1.0 - step / total)
            with np.errstate(over="ignore", invalid="ignore"):
                loss, gv, gb = sampled_softmax_loss(vectors, bias, batch, neg)
                vectors -= lr * gv
                bias -= lr * gb
            loss_sum += loss
            step += 1
        if not (np.isfinite(loss_sum) and np.isfinite(vectors).all() and np.isfinite(bias).all()):
            raise DivergenceError(f"EIR training diverged in epoch {epoch}")
        log.debug("eir epoch %d: mean loss %.4f", epoch, loss_sum / n)
    return EirModel(vectors, bias)


class EirDistance(DistanceFn):
    """Squared Euclidean distance between EIR latent vectors (biases ignored)."""

    kind = SimilarityKind.EIR

    def __init__(self, model: EirModel, chunk: int = 1 << 22):
        self.model = model
        self.n_items = model.n_items
        self._chunk = chunk

    def matrix(self, rows, cols) -> np.ndarray:
        rows, cols = np.asarray(rows), np.asarray(cols)
        x = self.model.vectors
        out = np.empty((len(rows), len(cols)))
        step = max(1, self._chunk // max(1, len(cols) * self.model.dim))
        for s in range(0, len(rows), step):
            d = x[rows[s : s + step]][:, None, :] - x[cols][None, :, :]
            out[s : s + step] = np.einsum("rcd,rcd->rc", d, d)
        return out
