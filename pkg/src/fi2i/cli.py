"""Command-line workflow: prepare -> train -> evaluate -> report, plus recommend.

All commands share one working directory::

    store.fi2i     training-side interaction statistics
    split.fi2i     per-user train/test pairs
    content.fi2i   item entity bags (optional)
    fisher.fi2i    fitted Fisher modalities
    eir.fi2i       EIR latent model (optional)
    reports/       metrics.csv, per-event dumps

Every command writes the configuration it ran with to ``run_config.txt``
next to its outputs.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._io import FormatError
from .dataset import (
    ContentBags,
    DataError,
    EventFormat,
    InteractionStore,
    PairSplit,
    read_content_file,
    read_events_file,
    split_pairs,
)
from .eir import DivergenceError, EirConfig, EirModel, train_eir
from .evaluation import EvalConfig, evaluate, format_table, write_csv, write_events_csv
from .fisher import FisherModel, fit_modality, select_samples
from .ranking import (
    BlendRanker,
    EirRanker,
    FisherConditionalRanker,
    FisherDistanceRanker,
    OracleRanker,
    Ranker,
    SimilarityRanker,
    rank_candidates,
)
from .similarity import SimilarityKind, make_distance

log = logging.getLogger("fi2i")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

STORE, SPLIT, CONTENT, FISHER, EIR = "store.fi2i", "split.fi2i", "content.fi2i", "fisher.fi2i", "eir.fi2i"
CONFIG_NAME = "run_config.txt"


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    workdir: str = "work"
    events: str = ""
    content: str = ""
    events_sep: str = "\\t"
    events_header: bool = False
    user_col: int = 0
    item_col: int = 1
    split_ratio: float = 0.9
    seed: int = 0
    # name:N pairs; "auto" = jaccard:20, plus content:10 when content bags exist
    modalities: str = "auto"
    pair_samples: int = 100_000
    eir: bool = False
    eir_dim: int = 20
    eir_epochs: int = 30
    eir_lr: float = 0.05
    eir_negatives: int = 20
    rankers: str = "jaccard,fd-jaccard,fc-jaccard"
    k: int = 20
    n_candidates: int = 200
    sampling: str = "uniform"
    max_freq_percentile: str = ""
    percentiles: str = "25,50,75"
    buckets: str = "0,100,inf"
    blend_weights: str = "0.5,0.5"
    fc_combine: str = "sum"
    dump_events: bool = False
    threads: int = 1

    @property
    def sep(self) -> str:
        return self.events_sep.encode("ascii").decode("unicode_escape")

    def set(self, key: str, raw: str) -> None:
        key = key.strip().replace("-", "_")
        fields = {f.name: f for f in dataclasses.fields(self)}
        if key not in fields:
            raise UsageError(f"unknown config key {key!r}")
        typ = type(getattr(RunConfig(), key))
        raw = raw.strip()
        try:
            if typ is bool:
                low = raw.lower()
                if low not in ("1", "0", "true", "false", "yes", "no"):
                    raise ValueError(raw)
                value = low in ("1", "true", "yes")
            else:
                value = typ(raw)
        except ValueError:
            raise UsageError(f"bad value for {key}: {raw!r}") from None
        setattr(self, key, value)

    def dumps(self) -> str:
        lines = ["# fi2i run configuration"]
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        cfg = base or cls()
        for n, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"config line {n}: expected key = value")
            k, v = line.split("=", 1)
            cfg.set(k, v)
        return cfg

    def eval_config(self) -> EvalConfig:
        return EvalConfig(
            k=self.k,
            n_candidates=self.n_candidates,
            seed=self.seed,
            max_freq_percentile=float(self.max_freq_percentile) if self.max_freq_percentile else None,
            percentiles=tuple(float(x) for x in _csv(self.percentiles)),
            buckets=tuple(float(x) for x in _csv(self.buckets)) or None,
            sampling=self.sampling,
            threads=self.threads,
        )


def _csv(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _write_config(cfg: RunConfig, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / CONFIG_NAME).write_text(cfg.dumps(), encoding="utf-8")


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise DataError(f"missing {path.name} in {path.parent} ({hint})")
    return path


class Workspace:
    """Lazy access to the files of one working directory."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.root = Path(cfg.workdir)
        self._store = self._split = self._bags = self._eir = self._fisher = None

    @property
    def store(self) -> InteractionStore:
        if self._store is None:
            self._store = InteractionStore.load(_require(self.root / STORE, "run prepare first"))
        return self._store

    @property
    def split(self) -> PairSplit:
        if self._split is None:
            self._split = PairSplit.load(_require(self.root / SPLIT, "run prepare first"))
        return self._split

    @property
    def bags(self) -> ContentBags | None:
        if self._bags is None and (self.root / CONTENT).exists():
            self._bags = ContentBags.load(self.root / CONTENT, self.store.vocab)
        return self._bags

    @property
    def eir(self) -> EirModel | None:
        if self._eir is None and (self.root / EIR).exists():
            self._eir = EirModel.load(self.root / EIR)
        return self._eir

    def distance(self, kind: SimilarityKind):
        if kind is SimilarityKind.CONTENT and self.bags is None:
            raise DataError("content modality requested but no content bags were prepared")
        if kind is SimilarityKind.EIR and self.eir is None:
            raise DataError("eir modality requested but no EIR model was trained (set eir = true)")
        return make_distance(kind, self.store, self.bags, self.eir)

    def fisher(self) -> FisherModel:
        if self._fisher is None:
            self._fisher = FisherModel.load(_require(self.root / FISHER, "run train first"), self.distance)
        return self._fisher


def cmd_prepare(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    if not cfg.events:
        raise UsageError("prepare needs an events file (--events)")
    root = Path(cfg.workdir)
    fmt = EventFormat(sep=cfg.sep, user_col=cfg.user_col, item_col=cfg.item_col, header=cfg.events_header)
    full, vocab = read_events_file(cfg.events, fmt)
    split = split_pairs(full.user_lists(), cfg.split_ratio, cfg.seed)
    store = InteractionStore.from_user_lists(vocab, full.user_ids, split.train_segments())
    root.mkdir(parents=True, exist_ok=True)
    store.save(root / STORE)
    split.save(root / SPLIT)
    if cfg.content:
        bags = read_content_file(cfg.content, vocab)
        bags.save(root / CONTENT)
        log.info("content bags: %d items with tokens, %d lines skipped", int((bags.sizes > 0).sum()), bags.skipped)
    _write_config(cfg, root)
    print("items\tusers\ttraining pairs\ttesting pairs\tsplit ratio", file=out)
    print(f"{len(vocab)}\t{store.n_users}\t{len(split.train_pairs)}\t{len(split.test_pairs)}\t{cfg.split_ratio}", file=out)
    return EXIT_OK


def _modality_plan(cfg: RunConfig, ws: Workspace) -> list[tuple[SimilarityKind, int]]:
    if cfg.modalities.strip().lower() == "auto":
        plan = [(SimilarityKind.JACCARD, 20)]
        if (ws.root / CONTENT).exists():
            plan.append((SimilarityKind.CONTENT, 10))
        return plan
    plan = []
    for part in _csv(cfg.modalities):
        name, _, n = part.partition(":")
        try:
            plan.append((SimilarityKind.parse(name), int(n) if n else 20))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return plan


def cmd_train(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    ws = Workspace(cfg)
    store, split = ws.store, ws.split
    plan = _modality_plan(cfg, ws)
    if cfg.eir or any(k is SimilarityKind.EIR for k, _ in plan):
        ecfg = EirConfig(
            dim=cfg.eir_dim,
            epochs=cfg.eir_epochs,
            learning_rate=cfg.eir_lr,
            negatives=cfg.eir_negatives,
            seed=cfg.seed,
        )
        t = time.perf_counter()
        model = train_eir(split.train_pairs, store.n_items, ecfg)
        model.save(ws.root / EIR)
        ws._eir = model
        print(f"eir: d={model.dim} trained in {time.perf_counter() - t:.1f}s", file=out)
    mods = []
    for kind, n in plan:
        t = time.perf_counter()
        samples = select_samples(store.freq, n)
        mods.append(fit_modality(ws.distance(kind), samples, pair_samples=cfg.pair_samples, seed=cfg.seed))
        print(f"fisher {kind.value}: N={n} fitted in {time.perf_counter() - t:.1f}s", file=out)
    FisherModel(mods).save(ws.root / FISHER)
    _write_config(cfg, ws.root)
    return EXIT_OK


BASELINES = ("cosine", "jaccard", "ecp", "content")


def ranker_names(fisher_names=(), eir=False) -> list[str]:
    names = list(BASELINES) + (["eir"] if eir else []) + ["oracle"]
    for m in list(fisher_names) + (["multi"] if len(fisher_names) > 1 else []):
        names += [f"fd-{m}", f"fc-{m}", f"fdfc-{m}"]
    return names


def build_ranker(name: str, ws: Workspace, cfg: RunConfig) -> Ranker:
    name = name.strip().lower()
    if name == "oracle":
        return OracleRanker()
    if name in BASELINES:
        return SimilarityRanker(ws.distance(SimilarityKind.parse(name)), name)
    if name == "eir":
        if ws.eir is None:
            raise DataError("eir ranker needs a trained EIR model (train with eir = true)")
        return EirRanker(ws.eir)
    prefix, _, mod = name.partition("-")
    if prefix in ("fd", "fc", "fdfc") and mod:
        fisher = ws.fisher()
        if mod == "multi":
            model = fisher
        elif mod in fisher.names():
            model = fisher.subset([mod])
        else:
            raise UsageError(f"no fitted modality {mod!r}; fitted: {', '.join(fisher.names())}")
        fd = FisherDistanceRanker(model, f"fd-{mod}")
        fc = FisherConditionalRanker(model, f"fc-{mod}", combine=cfg.fc_combine)
        if prefix == "fd":
            return fd
        if prefix == "fc":
            return fc
        w = [float(x) for x in _csv(cfg.blend_weights)]
        if len(w) != 2:
            raise UsageError("blend_weights needs two numbers (FD, FC)")
        return BlendRanker([(fd, w[0]), (fc, w[1])], name)
    fitted = ws.fisher().names() if (ws.root / FISHER).exists() else []
    valid = ", ".join(ranker_names(fitted, ws.eir is not None))
    raise UsageError(f"unknown ranker {name!r}; valid names: {valid}")


def cmd_evaluate(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    ws = Workspace(cfg)
    rankers = [build_ranker(n, ws, cfg) for n in _csv(cfg.rankers)]
    if not rankers:
        raise UsageError("no rankers given")
    ecfg = cfg.eval_config()
    store, split = ws.store, ws.split
    reports = []
    for r in rankers:
        t = time.perf_counter()
        reports.append(evaluate(split.test_pairs, r, store.freq, ecfg))
        log.info("%s evaluated in %.1fs", r.name, time.perf_counter() - t)
    rdir = ws.root / "reports"
    rdir.mkdir(parents=True, exist_ok=True)
    with open(rdir / "metrics.csv", "w", encoding="utf-8", newline="") as fh:
        write_csv(reports, fh)
    if cfg.dump_events:
        for rep in reports:
            with open(rdir / f"events_{rep.ranker}.csv", "w", encoding="utf-8", newline="") as fh:
                write_events_csv(rep, fh)
    _write_config(cfg, rdir)
    print(format_table(reports), file=out)
    return EXIT_OK


def cmd_recommend(cfg: RunConfig, item: str, ranker_name: str, top_n: int, out=None) -> int:
    out = out or sys.stdout
    ws = Workspace(cfg)
    vocab = ws.store.vocab
    try:
        i = vocab.index(item)
    except KeyError as exc:
        raise DataError(str(exc.args[0])) from None
    if top_n < 1:
        raise UsageError("top-n must be at least 1")
    ranker = build_ranker(ranker_name, ws, cfg)
    if isinstance(ranker, OracleRanker):
        raise UsageError("the oracle ranker cannot recommend")
    cands = np.delete(np.arange(len(vocab)), i)
    ranked = rank_candidates(i, cands, ranker)
    print(f"# ranker: {ranker.name}  item: {item}  ({'lower' if ranker.ascending else 'higher'} score is better)", file=out)
    for pos in range(min(top_n, len(ranked))):
        print(f"{pos + 1}\t{vocab.id(ranked.items[pos])}\t{ranked.scores[pos]:.6f}", file=out)
    return EXIT_OK


def cmd_report(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    path = _require(Path(cfg.workdir) / "reports" / "metrics.csv", "run evaluate first")
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [[c or "-" for c in r] for r in rows]
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    for n, r in enumerate(rows):
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)), file=out)
        if n == 0:
            print("  ".join("-" * w for w in widths), file=out)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--workdir", "-w")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="fi2i", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("prepare", parents=[common], help="ingest events, split, build statistics")
    sp.add_argument("--events")
    sp.add_argument("--content")
    sp.add_argument("--sep", dest="events_sep", help="field separator (default TAB; e.g. '::')")
    sp.add_argument("--header", dest="events_header", action="store_const", const=True, help="skip the first line")
    sp.add_argument("--split-ratio", type=float)

    sp = sub.add_parser("train", parents=[common], help="fit Fisher modalities (and EIR)")
    sp.add_argument("--modalities", help="e.g. jaccard:20,content:10")
    sp.add_argument("--eir", action="store_const", const=True)

    sp = sub.add_parser("evaluate", parents=[common], help="sampled-candidate evaluation")
    sp.add_argument("--rankers")
    sp.add_argument("--max-freq-percentile")
    sp.add_argument("--dump-events", action="store_const", const=True)

    sp = sub.add_parser("recommend", parents=[common], help="top-n next items for one item")
    sp.add_argument("item")
    sp.add_argument("--ranker", default="fd-jaccard")
    sp.add_argument("--top-n", type=int, default=10)

    sub.add_parser("report", parents=[common], help="print the last metrics.csv")
    return p


_FLAG_KEYS = (
    "seed",
    "threads",
    "workdir",
    "events",
    "content",
    "events_sep",
    "events_header",
    "split_ratio",
    "modalities",
    "eir",
    "rankers",
    "max_freq_percentile",
    "dump_events",
)


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from None
        cfg = RunConfig.loads(text, cfg)
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        cfg.set(key, value)
    for key in _FLAG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "prepare":
            return cmd_prepare(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        if args.command == "recommend":
            return cmd_recommend(cfg, args.item, args.ranker, args.top_n)
        return cmd_report(cfg)
    except UsageError as exc:
        print(f"fi2i: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FormatError, OSError) as exc:
        print(f"fi2i: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, FloatingPointError) as exc:
        print(f"fi2i: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
