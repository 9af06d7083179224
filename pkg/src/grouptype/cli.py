"""Command-line entry point: ``grouptype <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
Reports are JSON/CSV; short human-readable summaries go to stdout.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
import traceback
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import load_key_values
from .metrics import compute_all, labeling_candidates, metrics_to_csv
from .model import (CHANNELS, KINDS, Corpus, GroupOrigin, Label, SchemaError, ingest_groups,
                    ingest_labels)
from .overlap import overlap_analysis
from .prediction import (FeatureTable, TrainConfig, chi_square_rank,
                         evaluation_report, predict_by_threshold, score_table, train)
from .synth import InfeasibleConfig, SynthConfig, generate, load_config

log = logging.getLogger("grouptype")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
CONFIG_ENV = "GROUPTYPE_CONFIG"
SYNTH_CONFIG_ENV = "GROUPTYPE_SYNTH_CONFIG"
CORPUS_FILES = ("interactions", "groups", "terms", "labels")


class UsageError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- manifest

def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """What produced a report. Everything except ``wall_time`` is deterministic."""

    command: str
    inputs: dict[str, dict[str, str]] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    seed: int | None = None
    version: str = __version__
    wall_time: float | None = None
    started: float = field(default_factory=time.perf_counter, repr=False, compare=False)

    @classmethod
    def create(cls, command: str, files: dict[str, Path | None], config: dict, seed=None):
        inputs = {role: {"name": Path(p).name, "sha256": file_digest(p)}
                  for role, p in sorted(files.items()) if p is not None}
        return cls(command, inputs, config, seed)

    def embedded(self) -> dict:
        d = asdict(self)
        del d["wall_time"], d["started"]
        return d

    def write_sidecar(self, report: Path) -> None:
        """``<report>.manifest.json``: the embedded manifest plus elapsed seconds so far."""
        self.wall_time = time.perf_counter() - self.started
        side = report.with_name(report.name + ".manifest.json")
        body = self.embedded() | {"wall_time": self.wall_time}
        side.write_text(json.dumps(body, indent=2) + "\n", encoding="utf-8")


def write_json(path: Path, payload: dict, manifest: RunManifest) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"manifest": manifest.embedded(), **payload}
    path.write_text(json.dumps(body, indent=2, allow_nan=False) + "\n", encoding="utf-8")
    manifest.write_sidecar(path)


def write_text(path: Path, text: str, manifest: RunManifest) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    manifest.write_sidecar(path)


# ---------------------------------------------------------------- shared helpers

def _corpus_files(args) -> dict[str, Path | None]:
    base = Path(args.corpus) if args.corpus else None
    files = {}
    for name in CORPUS_FILES:
        explicit = getattr(args, name)
        if explicit:
            files[name] = Path(explicit)
        elif base is not None and (base / f"{name}.tsv").exists():
            files[name] = base / f"{name}.tsv"
        else:
            files[name] = None
    if files["interactions"] is None:
        raise UsageError("no interactions file: give a corpus directory or --interactions")
    for p in files.values():
        if p is not None and not p.is_file():
            raise FileNotFoundError(f"no such file: {p}")
    return files


def _load_corpus(files, strict: bool) -> Corpus:
    return Corpus.load(files["interactions"], files["groups"], files["terms"], files["labels"],
                       strict=strict)


def _read_ids(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [ln.split("\t")[0].strip() for ln in fh if ln.strip() and not ln.startswith("#")]


def _percentiles(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad percentile list {text!r}") from None
    if not vals or any(not 0 < v <= 100 for v in vals):
        raise UsageError("percentiles must lie in (0, 100]")
    return vals


def _threads(args) -> int:
    return max(1, args.threads or os.cpu_count() or 1)


def corpus_summary(corpus: Corpus) -> dict:
    """Counts in the shape of a dataset overview table."""
    g = corpus.graph
    rep = g.report
    origins = {o.value: sum(1 for x in corpus.groups if x.origin is o) for o in GroupOrigin}
    labels = {lab.value: sum(1 for x in corpus.groups if x.label is lab) for lab in Label}
    terms = {}
    for ch in CHANNELS:
        bags = [b for k, b in corpus.bags.items() if k[1] is ch]
        terms[ch.value] = {"groups": len(bags), "occurrences": sum(b.total for b in bags),
                           "distinct_tags": len({t for b in bags for t in b.counts})}
    return {
        "users": g.n_nodes,
        "interactions": {k.value: g.n_arcs(k) for k in KINDS},
        "dyads": {k.value: g.arcs[k].n_dyads for k in KINDS},
        "groups": origins,
        "labels": labels,
        "terms": terms,
        "ingest": {"rows": rep.rows, "self_loops": {k.value: v for k, v in rep.self_loops.items()},
                   "duplicate_contacts": rep.duplicate_contacts,
                   "skipped_rows": [{"row": r, "reason": why} for r, why in rep.skipped]},
    }


# ---------------------------------------------------------------- commands

def cmd_validate(args) -> int:
    files = _corpus_files(args)
    corpus = _load_corpus(files, strict=not args.lenient)
    summary = corpus_summary(corpus)
    manifest = RunManifest.create("validate", files, {"strict": not args.lenient})
    if args.out:
        write_json(Path(args.out), {"summary": summary}, manifest)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _metrics(corpus: Corpus, args, threads: int):
    universe = _read_ids(args.universe) if getattr(args, "universe", None) else None
    return compute_all(corpus, pooled=args.pooled, reciprocity_universe=universe,
                       bin_base=args.bin_base, min_bin_groups=args.min_bin_groups, threads=threads)


def cmd_metrics(args) -> int:
    files = _corpus_files(args)
    corpus = _load_corpus(files, strict=not args.lenient)
    metrics = _metrics(corpus, args, _threads(args))
    config = {"pooled": args.pooled, "bin_base": args.bin_base,
              "min_bin_groups": args.min_bin_groups, "strict": not args.lenient}
    if args.universe:
        files = {**files, "universe": Path(args.universe)}
    manifest = RunManifest.create("metrics", files, config)
    out = Path(args.out)
    write_text(out, metrics_to_csv(metrics), manifest)
    if args.candidates:
        ids = sorted(labeling_candidates(metrics))
        write_text(Path(args.candidates), "".join(f"{g}\n" for g in ids), manifest)
    print(f"{len(metrics)} groups -> {out}")
    return EXIT_OK


def _groups_of(path, origin: GroupOrigin):
    groups = list(ingest_groups(path).values())
    picked = [g for g in groups if g.origin is origin]
    if not picked:
        raise SchemaError(f"no {origin.value} groups", source=str(path))
    return picked


def cmd_overlap(args) -> int:
    detected = _groups_of(args.detected, GroupOrigin.DETECTED)
    declared = _groups_of(args.declared, GroupOrigin.DECLARED)
    pct = _percentiles(args.percentiles)
    rep = overlap_analysis(detected, declared, args.seed, pct).to_dict()
    manifest = RunManifest.create("overlap", {"detected": Path(args.detected),
                                              "declared": Path(args.declared)},
                                  {"percentiles": pct}, args.seed)
    write_json(Path(args.out), rep, manifest)
    mb = rep["mean_best_match"]
    print(f"mean best-match jaccard: real {mb['real']:.4f}, shuffled {mb['shuffled']:.4f}")
    return EXIT_OK


def _features_and_labels(args):
    table = FeatureTable.from_csv(args.features)
    labels = ingest_labels(args.labels) if args.labels else {}
    files = {"features": Path(args.features), "labels": Path(args.labels) if args.labels else None}
    return table, labels, files


def _fit_ids(table, labels, restrict: bool):
    if not restrict:
        return None
    return [g for g in table.group_ids if labels.get(g) in (Label.SOCIAL, Label.TOPICAL)]


def _train_config(args) -> TrainConfig:
    return TrainConfig(trees=args.trees, max_depth=args.max_depth,
                       min_samples_leaf=args.min_samples_leaf, seed=args.seed)


def _scores_csv(scores, predicted) -> str:
    lines = ["group_id,score,prediction,imputed\n"]
    for r in scores:
        lines.append(f"{r.group_id},{r.score!r},{predicted[r.group_id].value},{';'.join(r.imputed)}\n")
    return "".join(lines)


def cmd_predict(args) -> int:
    table, labels, files = _features_and_labels(args)
    if args.action != "score" and not labels:
        raise UsageError(f"predict {args.action} needs --labels")
    fit = _fit_ids(table, labels, args.fit_labeled)
    manifest_cfg = {"action": args.action, "fit_labeled": args.fit_labeled}
    if args.action == "score":
        manifest_cfg["threshold"] = args.threshold
        scores = score_table(table, fit)
        pred = predict_by_threshold(scores, args.threshold)
        manifest = RunManifest.create("predict score", files, manifest_cfg, args.seed)
        write_text(Path(args.out or "scores.csv"), _scores_csv(scores, pred), manifest)
        print(f"scored {len(scores)} groups")
    elif args.action == "train":
        cfg = _train_config(args)
        model = train(table, labels, cfg, threads=_threads(args))
        out = Path(args.out or "model.json")
        out.parent.mkdir(parents=True, exist_ok=True)
        model.save(out)
        RunManifest.create("predict train", files, asdict(cfg), args.seed).write_sidecar(out)
        print(f"trained {cfg.trees} trees -> {out}")
    elif args.action == "cv":
        cfg = _train_config(args)
        rep = evaluation_report(table, labels, args.seed, args.folds, args.top_k, cfg, fit,
                                _threads(args))
        manifest_cfg.update(asdict(cfg), folds=args.folds, top_k=args.top_k)
        write_json(Path(args.out or "eval_report.json"), rep,
                   RunManifest.create("predict cv", files, manifest_cfg, args.seed))
        for method, v in rep["summary"].items():
            print(f"{method:24s} accuracy {v['accuracy']:.3f}  auc {v['auc']:.3f}")
    else:  # rank
        ranking = chi_square_rank(table, labels)
        payload = {"top_k": [n for n, _ in ranking[:args.top_k]],
                   "ranking": [{"feature": n, "chi2": s} for n, s in ranking]}
        write_json(Path(args.out or "feature_ranking.json"), payload,
                   RunManifest.create("predict rank", files, manifest_cfg, args.seed))
        for n, s in ranking[:args.top_k]:
            print(f"{n:20s} {s:.3f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    path = args.config or os.environ.get(SYNTH_CONFIG_ENV)
    try:
        cfg = load_config(path, seed=args.seed) if path else SynthConfig(seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    corpus = generate(cfg)
    paths = corpus.write(args.out)
    (Path(args.out) / "synth.conf").write_text(cfg.to_text(), encoding="utf-8")
    print(f"wrote {', '.join(p.name for p in paths)} to {args.out} "
          f"({len(corpus.interactions)} interactions, {len(corpus.labels)} labeled groups)")
    return EXIT_OK


@dataclass
class PipelineConfig:
    """Settings for ``grouptype pipeline``; all keys optional in the config file."""

    folds: int = 10
    trees: int = 100
    max_depth: int = 8
    min_samples_leaf: int = 2
    top_k: int = 5
    percentiles: str = "91,99"
    pooled: bool = False
    bin_base: float = 2.0
    min_bin_groups: int = 5
    fit_labeled: bool = False
    threshold: float = 0.0


def cmd_pipeline(args) -> int:
    path = args.config or os.environ.get(CONFIG_ENV)
    try:
        cfg = load_key_values(path, PipelineConfig) if path else PipelineConfig()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    pct = _percentiles(cfg.percentiles)
    files = _corpus_files(args)
    out = Path(args.out)
    threads = _threads(args)
    config = asdict(cfg)

    def stage(name, fn):
        try:
            return fn()
        except (UsageError, KeyboardInterrupt):
            raise
        except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
            raise StageError(name, exc) from exc

    corpus = stage("ingest", lambda: _load_corpus(files, strict=True))
    metrics = stage("metrics", lambda: compute_all(corpus, pooled=cfg.pooled, bin_base=cfg.bin_base,
                                                   min_bin_groups=cfg.min_bin_groups,
                                                   threads=threads))
    manifest = RunManifest.create("pipeline", files, config, args.seed)
    write_text(out / "metrics.csv", metrics_to_csv(metrics), manifest)
    table = FeatureTable.from_metrics(metrics)
    labels = corpus.labels
    fit = _fit_ids(table, labels, cfg.fit_labeled)
    scores = stage("score", lambda: score_table(table, fit))
    write_text(out / "scores.csv", _scores_csv(scores, predict_by_threshold(scores, cfg.threshold)),
               manifest)
    written = ["metrics.csv", "scores.csv"]
    ys = {labels[g] for g in table.group_ids if labels.get(g) in (Label.SOCIAL, Label.TOPICAL)}
    if len(ys) == 2:
        tc = TrainConfig(cfg.trees, cfg.max_depth, cfg.min_samples_leaf, None, args.seed)
        rep = stage("cv", lambda: evaluation_report(table, labels, args.seed, cfg.folds, cfg.top_k,
                                                    tc, fit, threads))
        write_json(out / "eval_report.json", rep, manifest)
        written.append("eval_report.json")
        for method, v in rep["summary"].items():
            print(f"{method:24s} accuracy {v['accuracy']:.3f}  auc {v['auc']:.3f}")
    else:
        print("notice: labels missing or single-class; running in score-only mode", file=sys.stderr)
    det = [g for g in corpus.groups if g.origin is GroupOrigin.DETECTED]
    dec = [g for g in corpus.groups if g.origin is GroupOrigin.DECLARED]
    if det and dec:
        rep = stage("overlap", lambda: overlap_analysis(det, dec, args.seed, pct).to_dict())
        write_json(out / "overlap_report.json", rep, manifest)
        written.append("overlap_report.json")
    manifest.write_sidecar(out / "pipeline")
    print(f"wrote {', '.join(written)} to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_corpus_args(p):
    p.add_argument("corpus", nargs="?", help="directory holding interactions.tsv, groups.tsv, "
                                             "terms.tsv, labels.tsv (missing optional files are skipped)")
    for name in CORPUS_FILES:
        p.add_argument(f"--{name}", metavar="FILE", help=f"{name} file (overrides the directory)")
    p.add_argument("--lenient", action="store_true",
                   help="skip malformed rows instead of failing (contact rows with a photo still fail)")


def _add_metric_flags(p):
    p.add_argument("--pooled", action="store_true",
                   help="one reciprocity mean and entropy baseline over all groups instead of per origin")
    p.add_argument("--bin-base", type=float, default=2.0, help="entropy baseline bin base (default 2)")
    p.add_argument("--min-bin-groups", type=int, default=5,
                   help="merge entropy bins with fewer groups (default 5)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="grouptype", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"grouptype {__version__}")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker cap (default: available cores); outputs do not depend on it")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="ingest a corpus and print a summary of its contents")
    _add_corpus_args(p)
    p.add_argument("--out", help="also write the summary as JSON")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("metrics", help="compute per-group metrics into a CSV")
    _add_corpus_args(p)
    _add_metric_flags(p)
    p.add_argument("--universe", metavar="FILE",
                   help="group ids (first column) over which the reciprocity mean is taken")
    p.add_argument("--candidates", metavar="FILE", help="also write ids of labeling candidates")
    p.add_argument("--out", default="metrics.csv", help="output CSV (default metrics.csv)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("overlap", help="best-match Jaccard of detected vs declared groups")
    p.add_argument("--detected", required=True, metavar="FILE", help="groups file with detected groups")
    p.add_argument("--declared", required=True, metavar="FILE", help="groups file with declared groups")
    p.add_argument("--seed", type=int, required=True, help="seed of the member-shuffle null model")
    p.add_argument("--percentiles", default="91,99", help="comma-separated (default 91,99)")
    p.add_argument("--out", default="overlap_report.json")
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("predict", help="score, train, cross-validate or rank features")
    p.add_argument("action", choices=("score", "train", "cv", "rank"))
    p.add_argument("--features", required=True, metavar="CSV", help="metrics CSV")
    p.add_argument("--labels", metavar="TSV", help="labels file (required except for score)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--top-k", type=int, default=5, help="features kept by chi-square ranking")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=8)
    p.add_argument("--min-samples-leaf", type=int, default=2)
    p.add_argument("--threshold", type=float, default=0.0, help="S_g above this is social")
    p.add_argument("--fit-labeled", action="store_true",
                   help="z-score statistics from labeled groups only (default: all groups)")
    p.add_argument("--out", help="output path (default depends on the action)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("synth", help="synthetic corpora")
    ss = p.add_subparsers(dest="synth_command", required=True, parser_class=_Parser)
    g = ss.add_parser("generate", help="write a planted corpus (4 TSV files)")
    g.add_argument("--config", metavar="FILE",
                   help=f"key = value file of generator settings (default: ${SYNTH_CONFIG_ENV})")
    g.add_argument("--out", required=True, metavar="DIR")
    g.add_argument("--seed", type=int, required=True, help="overrides any seed in the config")
    g.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="metrics, score, cross-validation and overlap in one run")
    _add_corpus_args(p)
    p.add_argument("--config", metavar="FILE",
                   help=f"key = value pipeline settings (default: ${CONFIG_ENV})")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_pipeline)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        print("grouptype: error: --threads must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"grouptype: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        data = isinstance(exc.cause, (SchemaError, OSError, ValueError))
        print(f"grouptype: error in {exc}", file=sys.stderr)
        if not data:
            traceback.print_exception(exc.cause)
        return EXIT_DATA if data else EXIT_INTERNAL
    except (SchemaError, InfeasibleConfig, OSError, ValueError) as exc:
        print(f"grouptype: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
