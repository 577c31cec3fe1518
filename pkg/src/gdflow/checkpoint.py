"""Self-describing checkpoint container.

Layout::

    GDFLOW-CHECKPOINT <version>\\n
    <one-line JSON header: config, normalization stats, tau, metadata, block count>\\n
    then per parameter: "<name> <dim>,<dim>,...\\n" followed by little-endian float64 bytes
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .config import RunConfig
from .data import NormStats
from .model import GdflowModel

MAGIC = "GDFLOW-CHECKPOINT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save(path, model: GdflowModel, stats: NormStats, meta: dict[str, Any] | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = model.state_dict()
    header = {
        "config": {k: list(v) if isinstance(v, tuple) else v for k, v in model.config.to_dict().items()},
        "n_sensors": model.encoder.n_sensors,
        "stats": {"channels": list(stats.channels), "mean": stats.mean.tolist(), "std": stats.std.tolist()},
        "tau": model.tau,
        "meta": meta or {},
        "blocks": len(state),
    }
    with path.open("wb") as fh:
        fh.write(f"{MAGIC} {FORMAT_VERSION}\n".encode())
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for name, value in state.items():
            dims = ",".join(str(d) for d in value.shape)
            fh.write(f"{name} {dims}\n".encode())
            fh.write(np.ascontiguousarray(value, dtype="<f8").tobytes())


def load(path) -> tuple[GdflowModel, NormStats, dict[str, Any]]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    pos = 0

    def line() -> str:
        nonlocal pos
        end = raw.find(b"\n", pos)
        if end < 0:
            raise CheckpointError("truncated checkpoint")
        text = raw[pos:end].decode()
        pos = end + 1
        return text

    magic = line().split()
    if len(magic) != 2 or magic[0] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint")
    if int(magic[1]) != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {magic[1]}")
    header = json.loads(line())
    state = {}
    for _ in range(header["blocks"]):
        name, dims = line().split(" ")
        shape = tuple(int(d) for d in dims.split(",")) if dims else ()
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if pos + nbytes > len(raw):
            raise CheckpointError(f"truncated parameter block {name}")
        state[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).reshape(shape).astype(np.float64)
        pos += nbytes
    config = RunConfig.from_dict(header["config"])
    model = GdflowModel(config, header["n_sensors"], config.window)
    model.load_state_dict(state)
    model.tau = header["tau"]
    s = header["stats"]
    stats = NormStats(tuple(s["channels"]), np.array(s["mean"], dtype=np.float64), np.array(s["std"], dtype=np.float64))
    return model, stats, header["meta"]
