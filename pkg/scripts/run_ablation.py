"""Compare the full model with the no_quantile and no_ncde variants over several seeds.

All variants share one synthetic corpus and split; only the model seed varies.

    python3 scripts/run_ablation.py --seeds 0 1 2
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from gdflow import metrics
from gdflow.config import RunConfig
from gdflow.data import split_profiles
from gdflow.model import score_profiles, train
from gdflow.synthetic import CorpusSpec, generate_corpus

VARIANTS = {"full": {}, "no_quantile": {"no_quantile": True}, "no_ncde": {"no_ncde": True}}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--corpus-seed", type=int, default=0)
    parser.add_argument("--n-drives", type=int, default=60)
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--csv", type=Path, help="optional per-run output table")
    args = parser.parse_args()

    _, profiles = generate_corpus(CorpusSpec(n_drives=args.n_drives, anomaly_ratio=0.6), seed=args.corpus_seed)
    train_p, held = split_profiles(profiles, 0.8, seed=args.corpus_seed)
    rows = []
    for name, flags in VARIANTS.items():
        for seed in args.seeds:
            result = train(RunConfig(seed=seed, epochs=args.epochs, **flags), train_p, held)
            scored = score_profiles(result.model, held, result.stats)
            rep = metrics.evaluate(scored.scores, scored.labels, scored.profile_ids)
            rows.append({"variant": name, "seed": seed, **rep})
            print(f"{name:12s} seed {seed}: AUROC {rep['auroc']:.4f}  AUPRC {rep['auprc']:.4f}  F1-PA {rep['f1_pa']:.4f}", flush=True)

    print("\nvariant       mean AUROC  mean AUPRC  mean F1-PA")
    for name in VARIANTS:
        sel = [r for r in rows if r["variant"] == name]
        print(f"{name:12s}  {np.mean([r['auroc'] for r in sel]):10.4f}  {np.mean([r['auprc'] for r in sel]):10.4f}"
              f"  {np.mean([r['f1_pa'] for r in sel]):10.4f}")
    if args.csv:
        with args.csv.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)


if __name__ == "__main__":
    sys.exit(main())
