"""Command-line entry point: generate, preprocess, train, score, evaluate.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import checkpoint, metrics
from .config import ConfigError, RunConfig, load_config
from .data import (
    DataError,
    Profile,
    extract_profiles,
    load_benchmark,
    read_corpus,
    read_drive_csv,
    read_labels,
    resample_10ms,
    split_profiles,
    write_corpus,
    write_drive_csv,
)
from .model import NumericalError, score_profiles, train
from .objective import classify
from .synthetic import CorpusSpec, generate_corpus
from .tensor import NonFiniteError

log = logging.getLogger("gdflow")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
SCORE_HEADER = ("window_id", "profile_id", "start", "score", "decision")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat 'key = value' config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    for f in fields(RunConfig):
        if f.name == "seed":
            continue
        p.add_argument(f"--{f.name}", dest=f"cfg_{f.name}", metavar="VALUE", help=argparse.SUPPRESS)


def _config(args) -> RunConfig:
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    if args.seed is not None:
        overrides["seed"] = args.seed
    return load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gdflow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate a labeled synthetic corpus")
    _add_common(p)

    p = sub.add_parser("preprocess", help="resample drive CSVs and extract deceleration profiles")
    _add_common(p)
    p.add_argument("--input", type=Path, required=True, help="directory of drive CSVs")
    p.add_argument("--labels", type=Path, help="optional per-drive labels (profile_id,label keyed by drive file stem)")

    p = sub.add_parser("train", help="train a detector on a profile corpus")
    _add_common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus", type=Path)
    src.add_argument("--benchmark", type=Path, help="directory with train.csv, test.csv, test_label.csv")

    p = sub.add_parser("score", help="score windows with a trained checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus", type=Path)
    src.add_argument("--benchmark", type=Path)
    p.add_argument("--split", choices=("held", "all"), default="held", help="profiles to score (default: the held-out split)")
    p.add_argument("--labels", type=Path, help="labels.csv; when given, decisions use the best-F1 threshold")

    p = sub.add_parser("evaluate", help="compute F1-PA, AUROC and AUPRC for a score file")
    _add_common(p)
    p.add_argument("--scores", type=Path, required=True)
    p.add_argument("--labels", type=Path, help="profile labels.csv (per-window evaluation)")
    p.add_argument("--timestamp-labels", type=Path, help="per-row label vector (per-timestamp evaluation)")
    return parser


# -- commands ------------------------------------------------------------------


def cmd_generate(config: RunConfig, out: Path) -> None:
    spec = CorpusSpec(config.n_drives, config.anomaly_ratio, tuple(config.anomaly_kinds), config.noise)
    drives, profiles = generate_corpus(spec, seed=config.seed)
    for i, drive in enumerate(drives):
        write_drive_csv(drive, out / "drives" / f"drive{i:04d}.csv")
    write_corpus(profiles, out)
    log.info("wrote %d drives and %d profiles to %s", len(drives), len(profiles), out)


def cmd_preprocess(input_dir: Path, out: Path, labels_path: Path | None = None) -> list[Profile]:
    labels = read_labels(labels_path) if labels_path else {}
    paths = sorted(Path(input_dir).glob("*.csv"))
    if not paths:
        raise DataError(f"no drive CSVs in {input_dir}")
    profiles = []
    for path in paths:
        drive = resample_10ms(read_drive_csv(path))
        profiles.extend(extract_profiles(drive, drive_id=path.stem, label=labels.get(path.stem)))
    write_corpus(profiles, out)
    return profiles


def cmd_train(config: RunConfig, out: Path, corpus: Path | None = None, benchmark: Path | None = None):
    if benchmark is not None:
        train_series, test_series = load_benchmark(benchmark)
        config = config.replace(channels=train_series.channels)
        train_set = [train_series]
        held = [test_series] if config.train_split < 1.0 else []
    else:
        profiles = read_corpus(corpus)
        if not profiles:
            raise DataError(f"{corpus}: empty corpus")
        train_set, held = split_profiles(profiles, config.train_split, config.seed)
    if not train_set:
        raise DataError("no normal profiles to train on")

    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "train_log.csv"
    with log_path.open("w", newline="", encoding="utf-8") as fh:
        fh.write("epoch,loss,val_f1_pa,val_auroc\n")

        def on_epoch(e):
            fh.write(f"{e.epoch},{e.loss!r},{_opt(e.val_f1_pa)},{_opt(e.val_auroc)}\n")
            fh.flush()

        try:
            result = train(config, train_set, held, on_epoch=on_epoch)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
    meta = {
        "best_epoch": result.best_epoch,
        "best_f1_pa": result.best_f1,
        "losses": [e.loss for e in result.history],
        "train_profiles": [p.profile_id for p in train_set],
        "held_profiles": [p.profile_id for p in held],
    }
    checkpoint.save(out / "checkpoint.gdf", result.model, result.stats, meta)
    return result


def _opt(v) -> str:
    return "" if v is None else repr(float(v))


def cmd_score(ckpt_path: Path, out: Path, corpus: Path | None = None, benchmark: Path | None = None,
              split: str = "held", labels_path: Path | None = None) -> Path:
    model, stats, meta = checkpoint.load(ckpt_path)
    if benchmark is not None:
        profiles = [load_benchmark(benchmark)[1]]
    else:
        profiles = read_corpus(corpus)
        if split == "held" and meta.get("held_profiles"):
            wanted = set(meta["held_profiles"])
            profiles = [p for p in profiles if p.profile_id in wanted]
    if profiles and set(stats.channels) - set(profiles[0].channels):
        raise DataError(f"corpus lacks checkpoint channels {sorted(set(stats.channels) - set(profiles[0].channels))}")
    scored = score_profiles(model, profiles, stats)
    tau = model.tau
    if labels_path is not None and scored.scores.size:
        labels = read_labels(labels_path)
        y = np.array([labels.get(pid, 0) for pid in scored.profile_ids])
        if y.min() != y.max():
            tau, _ = metrics.best_f1_search(scored.scores, y, scored.profile_ids)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "scores.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(SCORE_HEADER) + "\n")
        for i, (pid, start, score) in enumerate(zip(scored.profile_ids, scored.starts, scored.scores)):
            decision = "" if tau is None else classify(float(score), tau).value
            fh.write(f"{i},{pid},{int(start)},{float(score)!r},{decision}\n")
    return path


def read_scores(path: Path) -> tuple[list[str], np.ndarray, np.ndarray]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SCORE_HEADER:
            raise DataError(f"{path}: expected header {','.join(SCORE_HEADER)}")
        rows = list(reader)
    pids = [r["profile_id"] for r in rows]
    starts = np.array([int(r["start"]) for r in rows], dtype=np.int64)
    scores = np.array([float(r["score"]) for r in rows], dtype=np.float64)
    return pids, starts, scores


def cmd_evaluate(scores_path: Path, out: Path, labels_path: Path | None = None,
                 timestamp_labels: Path | None = None, window: int = 0) -> dict[str, float]:
    pids, starts, scores = read_scores(scores_path)
    if timestamp_labels is not None:
        y = np.loadtxt(timestamp_labels, delimiter=",", dtype=np.float64).reshape(-1).astype(np.int64)
        if window < 2:
            raise ConfigError("per-timestamp evaluation needs --window")
        if starts.size and starts.max() + window > y.size:
            raise DataError("score windows extend past the label vector")
        s = metrics.timestamp_scores(scores, starts, window, y.size)
        groups = None
    elif labels_path is not None:
        labels = read_labels(labels_path)
        missing = sorted(set(pids) - set(labels))
        if missing:
            raise DataError(f"no labels for profiles {missing[:5]}")
        y = np.array([labels[p] for p in pids], dtype=np.int64)
        s = scores
        groups = pids
    else:
        raise ConfigError("evaluate needs --labels or --timestamp-labels")
    try:
        report = metrics.evaluate(s, y, groups)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    report["n_units"] = int(y.size)
    out.mkdir(parents=True, exist_ok=True)
    text = format_report(report)
    (out / "metrics.txt").write_text(text, encoding="utf-8")
    (out / "metrics.json").write_text(json.dumps(report, sort_keys=True) + "\n", encoding="utf-8")
    print(text, end="")
    return report


def format_report(report: dict) -> str:
    lines = [f"{k} = {v!r}" for k, v in report.items()]
    lines.append(json.dumps(report, sort_keys=True))
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _config(args)
        if args.command == "generate":
            cmd_generate(config, args.out)
        elif args.command == "preprocess":
            cmd_preprocess(args.input, args.out, args.labels)
        elif args.command == "train":
            cmd_train(config, args.out, args.corpus, args.benchmark)
        elif args.command == "score":
            cmd_score(args.checkpoint, args.out, args.corpus, args.benchmark, args.split, args.labels)
        elif args.command == "evaluate":
            cmd_evaluate(args.scores, args.out, args.labels, args.timestamp_labels, config.window)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, NonFiniteError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, checkpoint.CheckpointError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
