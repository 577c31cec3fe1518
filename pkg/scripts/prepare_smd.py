"""Convert one SMD machine from the ServerMachineDataset layout into benchmark CSVs.

Expects a local copy of the dataset (``train/``, ``test/`` and
``test_label/`` directories holding ``<machine>.txt``); nothing is downloaded.

    python3 scripts/prepare_smd.py --source /data/ServerMachineDataset --machine machine-1-4
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--source", type=Path, required=True)
    parser.add_argument("--machine", default="machine-1-4")
    parser.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data" / "smd")
    args = parser.parse_args()

    dest = args.out / args.machine
    dest.mkdir(parents=True, exist_ok=True)
    for part, name in (("train", "train.csv"), ("test", "test.csv"), ("test_label", "test_label.csv")):
        arr = np.loadtxt(args.source / part / f"{args.machine}.txt", delimiter=",", ndmin=2)
        fmt = "%d" if part == "test_label" else "%.10g"
        np.savetxt(dest / name, arr, delimiter=",", fmt=fmt)
        print(f"{part}: {arr.shape} -> {dest / name}")


if __name__ == "__main__":
    main()
