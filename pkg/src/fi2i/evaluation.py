"""Ranking metrics and the sampled-candidate evaluation harness.

For every test pair ``(i, j)`` the true next item ``j`` is ranked among
itself plus a random sample of other items.  Recall@K and DCG@K resolve
ties by item index; percentile rank gives tied items half weight.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import support_percentile
from .ranking import RankedCandidates, Ranker, rank_candidates

log = logging.getLogger(__name__)

__all__ = [
    "recall_at_k",
    "dcg_at_k",
    "percentile_rank",
    "EvalConfig",
    "EventRecord",
    "Aggregate",
    "MetricsReport",
    "sample_candidates",
    "evaluate",
    "bucket_by_support",
    "write_csv",
    "write_events_csv",
    "format_table",
]


def recall_at_k(ranked: RankedCandidates, j: int, k: int) -> int:
    return int(ranked.rank(j) <= k)


def dcg_at_k(ranked: RankedCandidates, j: int, k: int) -> float:
    r = ranked.rank(j)
    return 1.0 / math.log2(r + 1) if r <= k else 0.0


def percentile_rank(ranked: RankedCandidates, j: int, freq) -> float:
    """Share of candidate frequency mass ranked after ``j``; ties count half.

    0 means ``j`` came last, values near 1 mean it came first.
    """
    pos = ranked.position(j)
    f = np.asarray(freq, dtype=np.float64)[ranked.items]
    total = f.sum()
    if total <= 0:
        raise ValueError("candidate frequencies sum to zero")
    g = ranked.groups[pos]
    after = f[ranked.groups > g].sum()
    tied = f[ranked.groups == g].sum() - f[pos]
    return float((after + 0.5 * tied) / total)


@dataclass(frozen=True)
class EvalConfig:
    k: int = 20
    n_candidates: int = 200
    seed: int = 0
    # keep only events whose conditional item has f_i <= this percentile
    max_freq_percentile: float | None = None
    # extra report sections: one per percentile threshold and per support bucket
    percentiles: tuple[float, ...] = ()
    buckets: tuple[float, ...] | None = None
    sampling: str = "uniform"
    threads: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("K must be at least 1")
        if self.n_candidates < 1:
            raise ValueError("candidate sample size must be at least 1")
        if self.sampling not in ("uniform", "popularity"):
            raise ValueError(f"sampling must be uniform or popularity, got {self.sampling!r}")


@dataclass(frozen=True)
class EventRecord:
    index: int
    item: int
    truth: int
    freq: int
    rank: int
    recall: int
    dcg: float
    pr: float


@dataclass(frozen=True)
class Aggregate:
    label: str
    events: int
    recall: float | None
    dcg: float | None
    mpr: float | None

    @classmethod
    def of(cls, label: str, records: Sequence[EventRecord]) -> "Aggregate":
        if not records:
            return cls(label, 0, None, None, None)
        n = len(records)
        return cls(
            label,
            n,
            math.fsum(r.recall for r in records) / n,
            math.fsum(r.dcg for r in records) / n,
            math.fsum(r.pr for r in records) / n,
        )


@dataclass
class MetricsReport:
    ranker: str
    k: int
    records: list[EventRecord]
    sections: list[Aggregate] = field(default_factory=list)

    @property
    def overall(self) -> Aggregate:
        return self.sections[0]

    def section(self, label: str) -> Aggregate:
        for s in self.sections:
            if s.label == label:
                return s
        raise KeyError(label)


def sample_candidates(rng, n_items: int, i: int, j: int, size: int, freq=None, sampling: str = "uniform"):
    """Draw distinct items other than ``i`` and ``j``."""
    others = n_items - (2 if i != j else 1)
    if sampling == "popularity":
        p = np.asarray(freq, dtype=np.float64).copy()
        p[[i, j]] = 0.0
        avail = int(np.count_nonzero(p))
        if avail < size:
            log.debug("only %d items available for popularity sampling (wanted %d)", avail, size)
            return np.flatnonzero(p)
        return np.sort(rng.choice(n_items, size=size, replace=False, p=p / p.sum()))
    if others < size:
        log.debug("only %d other items available (wanted %d); using all", others, size)
        return np.setdiff1d(np.arange(n_items), [i, j])
    x = rng.choice(others, size=size, replace=False)
    lo, hi = min(i, j), max(i, j)
    x = x + (x >= lo)
    if hi != lo:
        x = x + (x >= hi)
    return np.sort(x)


def _event(index, i, j, ranker, freq, n_items, config) -> EventRecord:
    rng = np.random.default_rng([config.seed, index])
    sample = sample_candidates(rng, n_items, i, j, config.n_candidates, freq, config.sampling)
    cands = np.concatenate([[j], sample])
    ranked = rank_candidates(i, cands, ranker, truth=j)
    r = ranked.rank(j)
    return EventRecord(
        index=index,
        item=int(i),
        truth=int(j),
        freq=int(freq[i]),
        rank=r,
        recall=recall_at_k(ranked, j, config.k),
        dcg=dcg_at_k(ranked, j, config.k),
        pr=percentile_rank(ranked, j, freq),
    )


def bucket_by_support(records: Sequence[EventRecord], edges: Sequence[float]) -> list[Aggregate]:
    """Aggregate events into ``[edges[b], edges[b+1])`` by conditional-item frequency."""
    edges = list(edges)
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("bucket edges must be strictly increasing with at least two entries")
    out = []
    for lo, hi in zip(edges, edges[1:]):
        members = [r for r in records if lo <= r.freq < hi]
        out.append(Aggregate.of(f"support[{_fmt_edge(lo)},{_fmt_edge(hi)})", members))
    return out


def _fmt_edge(x) -> str:
    if math.isinf(x):
        return "inf"
    return str(int(x)) if float(x).is_integer() else str(x)


def evaluate(test_pairs, ranker: Ranker, freq, config: EvalConfig = EvalConfig()) -> MetricsReport:
    """Rank each test pair's true item among sampled candidates and score it.

    Every event draws its candidates from its own generator seeded by
    ``(config.seed, event index)``, so results do not depend on threading.
    """
    freq = np.asarray(freq)
    n_items = len(freq)
    pairs = np.asarray(test_pairs, dtype=np.int64).reshape(-1, 2)
    idx = np.arange(len(pairs))
    if config.max_freq_percentile is not None:
        thr = support_percentile(freq, config.max_freq_percentile)
        keep = freq[pairs[:, 0]] <= thr
        idx, pairs = idx[keep], pairs[keep]
        log.info("%s: %d events with conditional frequency <= %s", ranker.name, len(pairs), thr)

    def run(chunk):
        return [_event(int(e), int(i), int(j), ranker, freq, n_items, config) for e, (i, j) in chunk]

    if n_items - 2 < config.n_candidates:
        log.warning("%d items cannot supply %d candidates per event; some events use fewer", n_items, config.n_candidates)
    work = list(zip(idx, pairs))
    if config.threads > 1 and len(work) > 1:
        size = -(-len(work) // (config.threads * 4))
        chunks = [work[s : s + size] for s in range(0, len(work), size)]
        with ThreadPoolExecutor(config.threads) as pool:
            records = [r for part in pool.map(run, chunks) for r in part]
    else:
        records = run(work)

    sections = [Aggregate.of("all", records)]
    for q in config.percentiles:
        thr = support_percentile(freq, q)
        members = [r for r in records if r.freq <= thr]
        sections.append(Aggregate.of(f"freq<=p{_fmt_edge(q)}", members))
    if config.buckets:
        sections.extend(bucket_by_support(records, config.buckets))
    return MetricsReport(ranker.name, config.k, records, sections)


def _cell(v) -> str:
    return "" if v is None else f"{v:.6f}"


def write_csv(reports: Sequence[MetricsReport], fh) -> None:
    k = reports[0].k if reports else 20
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["ranker", "bucket", "events", f"recall@{k}", f"dcg@{k}", "mpr"])
    for rep in reports:
        for s in rep.sections:
            w.writerow([rep.ranker, s.label, s.events, _cell(s.recall), _cell(s.dcg), _cell(s.mpr)])


def write_events_csv(report: MetricsReport, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["event", "item", "truth", "freq", "rank", "recall", "dcg", "pr"])
    for r in report.records:
        w.writerow([r.index, r.item, r.truth, r.freq, r.rank, r.recall, f"{r.dcg:.6f}", f"{r.pr:.6f}"])


def format_table(reports: Sequence[MetricsReport]) -> str:
    buf = io.StringIO()
    write_csv(reports, buf)
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    rows = [[c if c != "" else "-" for c in row] for row in rows]
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    lines = []
    for n, row in enumerate(rows):
        lines.append("  ".join(c.ljust(w) if k < 2 else c.rjust(w) for k, (c, w) in enumerate(zip(row, widths))))
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
