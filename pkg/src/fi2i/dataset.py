"""Interaction logs, co-occurrence statistics, per-user splits and content bags."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from ._io import read_container, write_container

log = logging.getLogger(__name__)

__all__ = [
    "DataError",
    "EventFormat",
    "Vocabulary",
    "InteractionStore",
    "PairSplit",
    "ContentBags",
    "ingest_events",
    "read_events_file",
    "split_pairs",
    "ingest_content",
    "read_content_file",
    "support_percentile",
]


class DataError(ValueError):
    """Bad or missing input data. Carries the source and line when known."""

    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)
        self.source = source
        self.line = line


@dataclass(frozen=True)
class EventFormat:
    """How to pull ``(user, item)`` out of one line of an events file."""

    sep: str = "\t"
    user_col: int = 0
    item_col: int = 1
    comment: str = "#"
    header: bool = False


class Vocabulary:
    """Bijection between external item ids and dense indices ``0..M-1``."""

    def __init__(self, ids: Sequence[str]):
        self.ids = np.asarray(ids, dtype=str)
        self._index = {s: k for k, s in enumerate(self.ids.tolist())}
        if len(self._index) != len(self.ids):
            raise ValueError("vocabulary ids must be unique")

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, item_id) -> bool:
        return item_id in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and np.array_equal(self.ids, other.ids)

    def index(self, item_id: str) -> int:
        try:
            return self._index[item_id]
        except KeyError:
            raise KeyError(f"unknown item id {item_id!r}") from None

    def id(self, index: int) -> str:
        return str(self.ids[index])


def _user_matrix(indptr: np.ndarray, items: np.ndarray, n_items: int) -> sp.csr_matrix:
    data = np.ones(len(items), dtype=np.int32)
    return sp.csr_matrix((data, items, indptr), shape=(len(indptr) - 1, n_items))


class InteractionStore:
    """Per-user item lists with item and item-pair user counts.

    ``freq[i]`` is the number of distinct users with item ``i``;
    ``pair_freq(i, j)`` the number of users with both.  The co-occurrence
    matrix is symmetric and its diagonal equals ``freq``.
    """

    def __init__(self, vocab: Vocabulary, user_ids, indptr, items):
        self.vocab = vocab
        self.user_ids = np.asarray(user_ids, dtype=str)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.items = np.asarray(items, dtype=np.int64)
        if len(self.indptr) != len(self.user_ids) + 1:
            raise ValueError("indptr length must be user count + 1")
        x = _user_matrix(self.indptr, self.items, len(vocab))
        x.sum_duplicates()
        x.data[:] = 1
        self.freq = np.asarray(x.sum(axis=0), dtype=np.int64).ravel()
        self.cooc = (x.T @ x).tocsr()
        self.cooc.sort_indices()

    @classmethod
    def from_user_lists(cls, vocab: Vocabulary, user_ids, lists: Sequence[Sequence[int]]):
        indptr = np.zeros(len(lists) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(x) for x in lists])
        items = np.concatenate([np.asarray(x, dtype=np.int64) for x in lists]) if lists else []
        return cls(vocab, user_ids, indptr, items)

    @property
    def n_items(self) -> int:
        return len(self.vocab)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    def user_items(self, u: int) -> np.ndarray:
        return self.items[self.indptr[u] : self.indptr[u + 1]]

    def user_lists(self) -> list[np.ndarray]:
        return [self.user_items(u) for u in range(self.n_users)]

    def pair_freq(self, i: int, j: int) -> int:
        return int(self.cooc[i, j])

    def pair_freq_row(self, i: int, cols) -> np.ndarray:
        """``f_ij`` for one ``i`` against an array of ``j``."""
        row = self.cooc.getrow(i)
        dense = np.zeros(self.n_items, dtype=np.int64)
        dense[row.indices] = row.data
        return dense[np.asarray(cols)]

    def pair_freq_block(self, rows, cols) -> np.ndarray:
        return self.cooc[np.asarray(rows)][:, np.asarray(cols)].toarray().astype(np.int64)

    def save(self, path) -> None:
        write_container(
            path,
            "store",
            {"n_items": self.n_items, "n_users": self.n_users},
            {
                "item_ids": self.vocab.ids,
                "user_ids": self.user_ids,
                "indptr": self.indptr,
                "items": self.items,
            },
        )

    @classmethod
    def load(cls, path) -> "InteractionStore":
        _, arr = read_container(path, "store")
        return cls(Vocabulary(arr["item_ids"]), arr["user_ids"], arr["indptr"], arr["items"])


def _parse_events(lines: Iterable[str], fmt: EventFormat, source: str):
    records = []
    need = max(fmt.user_col, fmt.item_col) + 1
    for lineno, raw in enumerate(lines, start=1):
        if fmt.header and lineno == 1:
            continue
        line = raw.rstrip("\r\n")
        if not line.strip() or (fmt.comment and line.lstrip().startswith(fmt.comment)):
            continue
        parts = line.split(fmt.sep)
        if len(parts) < need:
            raise DataError(f"expected at least {need} fields, got {len(parts)}", source, lineno)
        user, item = parts[fmt.user_col].strip(), parts[fmt.item_col].strip()
        if not user or not item:
            raise DataError("empty user or item id", source, lineno)
        records.append((user, item))
    if not records:
        raise DataError("no interaction records", source)
    return records


def ingest_events(
    lines: Iterable[str], fmt: EventFormat = EventFormat(), source: str = "<events>"
) -> tuple[InteractionStore, Vocabulary]:
    """Parse ``user<TAB>item`` records into a store over all of them.

    Item and user ids are sorted lexicographically to fix the dense indices.
    Per-user lists keep first-seen order with repeats dropped.
    """
    records = _parse_events(lines, fmt, source)
    users, items = zip(*records)
    vocab = Vocabulary(sorted(set(items)))
    user_ids = sorted(set(users))
    uindex = {u: k for k, u in enumerate(user_ids)}
    lists: list[list[int]] = [[] for _ in user_ids]
    seen: list[set[int]] = [set() for _ in user_ids]
    for u, it in records:
        k = uindex[u]
        i = vocab.index(it)
        if i not in seen[k]:
            seen[k].add(i)
            lists[k].append(i)
    store = InteractionStore.from_user_lists(vocab, user_ids, lists)
    return store, vocab


def read_events_file(path, fmt: EventFormat = EventFormat()) -> tuple[InteractionStore, Vocabulary]:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            return ingest_events(fh, fmt, source=str(path))
    except OSError as exc:
        raise DataError(f"cannot read events file: {exc.strerror}", str(path)) from exc
    except UnicodeDecodeError as exc:
        raise DataError("events file is not valid UTF-8", str(path)) from exc


@dataclass
class PairSplit:
    """Train/test item pairs produced from per-user random orderings.

    The per-user training segments are kept so training statistics can be
    rebuilt from exactly the interactions on the training side.
    """

    train_pairs: np.ndarray
    test_pairs: np.ndarray
    seed: int
    ratio: float
    train_indptr: np.ndarray
    train_items: np.ndarray
    test_indptr: np.ndarray
    test_items: np.ndarray

    def train_segments(self) -> list[np.ndarray]:
        p = self.train_indptr
        return [self.train_items[p[u] : p[u + 1]] for u in range(len(p) - 1)]

    def test_segments(self) -> list[np.ndarray]:
        p = self.test_indptr
        return [self.test_items[p[u] : p[u + 1]] for u in range(len(p) - 1)]

    def save(self, path) -> None:
        write_container(
            path,
            "split",
            {"seed": int(self.seed), "ratio": float(self.ratio)},
            {
                "train_pairs": self.train_pairs,
                "test_pairs": self.test_pairs,
                "train_indptr": self.train_indptr,
                "train_items": self.train_items,
                "test_indptr": self.test_indptr,
                "test_items": self.test_items,
            },
        )

    @classmethod
    def load(cls, path) -> "PairSplit":
        meta, arr = read_container(path, "split")
        return cls(seed=meta["seed"], ratio=meta["ratio"], **arr)


def _consecutive(seq: np.ndarray) -> np.ndarray:
    if len(seq) < 2:
        return np.empty((0, 2), dtype=np.int64)
    return np.column_stack([seq[:-1], seq[1:]]).astype(np.int64)


def _flatten(segments: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    indptr = np.zeros(len(segments) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(s) for s in segments])
    items = np.concatenate(segments).astype(np.int64) if segments else np.empty(0, np.int64)
    return indptr, items


def split_pairs(user_lists: Sequence[Sequence[int]], ratio: float = 0.9, seed: int = 0) -> PairSplit:
    """Permute each user's items and cut the ordering at ``ratio``.

    Consecutive items inside the first segment become training pairs and
    consecutive items inside the second become testing pairs; the pair that
    straddles the cut belongs to neither side.  Users are processed in index
    order from one generator, so the result depends only on the inputs.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must lie in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    train_segs, test_segs = [], []
    train_pairs, test_pairs = [], []
    for items in user_lists:
        items = np.asarray(items, dtype=np.int64)
        order = items[rng.permutation(len(items))]
        # guard against 0.29 * 100 == 28.999...
        cut = math.floor(ratio * len(order) + 1e-9)
        head, tail = order[:cut], order[cut:]
        train_segs.append(head)
        test_segs.append(tail)
        train_pairs.append(_consecutive(head))
        test_pairs.append(_consecutive(tail))
    train_indptr, train_items = _flatten(train_segs)
    test_indptr, test_items = _flatten(test_segs)
    empty = np.empty((0, 2), dtype=np.int64)
    return PairSplit(
        train_pairs=np.concatenate(train_pairs) if train_pairs else empty,
        test_pairs=np.concatenate(test_pairs) if test_pairs else empty,
        seed=int(seed),
        ratio=float(ratio),
        train_indptr=train_indptr,
        train_items=train_items,
        test_indptr=test_indptr,
        test_items=test_items,
    )


@dataclass
class ContentBags:
    """Deduplicated entity-token bag per item, stored as a binary item x token matrix."""

    vocab: Vocabulary
    tokens: np.ndarray
    matrix: sp.csr_matrix
    skipped: int = field(default=0, compare=False)

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.matrix.indptr)

    def bag(self, i: int) -> frozenset[str]:
        row = self.matrix.indices[self.matrix.indptr[i] : self.matrix.indptr[i + 1]]
        return frozenset(self.tokens[row].tolist())

    def save(self, path) -> None:
        m = self.matrix
        write_container(
            path,
            "content",
            {"n_items": len(self.vocab), "n_tokens": len(self.tokens)},
            {"item_ids": self.vocab.ids, "tokens": self.tokens, "indptr": m.indptr, "indices": m.indices},
        )

    @classmethod
    def load(cls, path, vocab: Vocabulary | None = None) -> "ContentBags":
        meta, arr = read_container(path, "content")
        stored = Vocabulary(arr["item_ids"])
        if vocab is not None and vocab != stored:
            raise DataError("content bags were built against a different vocabulary", str(path))
        data = np.ones(len(arr["indices"]), dtype=np.int32)
        m = sp.csr_matrix((data, arr["indices"], arr["indptr"]), shape=(meta["n_items"], meta["n_tokens"]))
        return cls(vocab or stored, arr["tokens"], m)


def ingest_content(lines: Iterable[str], vocab: Vocabulary, source: str = "<content>") -> ContentBags:
    """Build item bags from ``item_id<TAB>entity_token`` lines.

    Lines naming items outside ``vocab`` are skipped and counted.
    """
    bags: dict[int, set[str]] = {}
    skipped = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 2 or not parts[1].strip():
            raise DataError("expected item_id<TAB>entity_token", source, lineno)
        item, token = parts[0].strip(), parts[1].strip()
        if item not in vocab:
            skipped += 1
            continue
        bags.setdefault(vocab.index(item), set()).add(token)
    if skipped:
        log.warning("%s: skipped %d content lines for unknown items", source, skipped)
    tokens = sorted(set().union(*bags.values())) if bags else []
    tindex = {t: k for k, t in enumerate(tokens)}
    rows, cols = [], []
    for i in sorted(bags):
        for t in sorted(bags[i]):
            rows.append(i)
            cols.append(tindex[t])
    m = sp.csr_matrix(
        (np.ones(len(rows), dtype=np.int32), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=(len(vocab), len(tokens)),
    )
    m.sort_indices()
    return ContentBags(vocab, np.asarray(tokens, dtype=str), m, skipped)


def read_content_file(path, vocab: Vocabulary) -> ContentBags:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            return ingest_content(fh, vocab, source=str(path))
    except OSError as exc:
        raise DataError(f"cannot read content file: {exc.strerror}", str(path)) from exc


def support_percentile(freq, q: float) -> int:
    """Nearest-rank ``q``-th percentile of an item frequency vector."""
    freq = np.asarray(freq)
    if freq.size == 0:
        raise ValueError("empty frequency vector")
    if not 0 < q <= 100:
        raise ValueError(f"percentile must lie in (0, 100], got {q}")
    ordered = np.sort(freq, kind="stable")
    rank = math.ceil(q / 100.0 * len(ordered) - 1e-12)
    return ordered[max(rank, 1) - 1].item()
