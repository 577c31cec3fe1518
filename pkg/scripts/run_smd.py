"""Train and evaluate on one SMD machine (window 60, stride 10, no validation split).

Run ``scripts/prepare_smd.py`` first.

    python3 scripts/run_smd.py --bench data/smd/machine-1-4 --out runs/smd
"""

from __future__ import annotations

import argparse
from pathlib import Path

from gdflow.cli import cmd_evaluate, cmd_score, cmd_train
from gdflow.config import load_config

SMD_OVERRIDES = {"window": 60, "stride": 10, "train_split": 1.0}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--bench", type=Path, default=Path("data/smd/machine-1-4"))
    parser.add_argument("--out", type=Path, default=Path("runs/smd"))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int)
    args = parser.parse_args()

    config = load_config(None, {**SMD_OVERRIDES, "seed": args.seed, "epochs": args.epochs})
    cmd_train(config, args.out, benchmark=args.bench)
    scores = cmd_score(args.out / "checkpoint.gdf", args.out, benchmark=args.bench)
    cmd_evaluate(scores, args.out, timestamp_labels=args.bench / "test_label.csv", window=config.window)


if __name__ == "__main__":
    main()
