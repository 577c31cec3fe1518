"""Sweep the training/scoring quantile q over the grid used for tuning.

    python3 scripts/quantile_sweep.py --seed 0
"""

from __future__ import annotations

import argparse

from gdflow import metrics
from gdflow.config import RunConfig
from gdflow.data import split_profiles
from gdflow.model import score_profiles, train
from gdflow.objective import SWEEP_QUANTILES
from gdflow.synthetic import CorpusSpec, generate_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=10)
    args = parser.parse_args()

    _, profiles = generate_corpus(CorpusSpec(), seed=args.seed)
    train_p, held = split_profiles(profiles, 0.8, seed=args.seed)
    for q in SWEEP_QUANTILES:
        result = train(RunConfig(seed=args.seed, epochs=args.epochs, q=q), train_p, held)
        scored = score_profiles(result.model, held, result.stats)
        rep = metrics.evaluate(scored.scores, scored.labels, scored.profile_ids)
        print(f"q={q:<5} AUROC {rep['auroc']:.4f}  AUPRC {rep['auprc']:.4f}  F1-PA {rep['f1_pa']:.4f}", flush=True)


if __name__ == "__main__":
    main()
