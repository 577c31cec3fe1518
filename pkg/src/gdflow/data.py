"""Drive ingestion, deceleration-profile extraction, normalization and windowing."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

log = logging.getLogger(__name__)

DRIVE_CHANNELS = ("accel_pedal_pct", "brake_pedal_pct", "speed_kph", "lat_acc_g", "long_acc_g")
DRIVE_HEADER = ("t_ms",) + DRIVE_CHANNELS
DEFAULT_MODEL_CHANNELS = ("long_acc_g", "speed_kph", "brake_pedal_pct", "accel_pedal_pct", "lat_acc_g")

SAMPLE_MS = 10.0
ACCEL_RELEASED_PCT = 0.5
MIN_PEAK_SPEED_KPH = 15.0
MIN_PEAK_BRAKE_PCT = 2.0
MAX_LAT_ACC_G = 0.07
STD_FLOOR = 1e-6


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass
class RawDrive:
    t_ms: np.ndarray
    values: np.ndarray  # (samples, channels)
    channels: tuple[str, ...] = DRIVE_CHANNELS

    def __post_init__(self):
        self.t_ms = np.asarray(self.t_ms, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.t_ms.size, len(self.channels)):
            raise DataError(f"values {self.values.shape} do not match {self.t_ms.size} timestamps x {len(self.channels)} channels")
        if self.t_ms.size > 1 and np.any(np.diff(self.t_ms) <= 0):
            raise DataError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return self.t_ms.size

    def channel(self, name: str) -> np.ndarray:
        return self.values[:, self.channels.index(name)]


@dataclass
class Profile:
    profile_id: str
    values: np.ndarray  # (samples, channels)
    channels: tuple[str, ...] = DRIVE_CHANNELS
    label: int | None = None
    t_ms: np.ndarray | None = None
    timestamp_labels: np.ndarray | None = None

    def __len__(self) -> int:
        return self.values.shape[0]

    def channel(self, name: str) -> np.ndarray:
        return self.values[:, self.channels.index(name)]


@dataclass
class NormStats:
    channels: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray


@dataclass
class WindowBatch:
    data: np.ndarray  # (b, n, w)
    profile_ids: list[str] = field(default_factory=list)
    starts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return self.data.shape[0]


# -- drive CSV ------------------------------------------------------------------


def read_drive_csv(path) -> RawDrive:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(h.strip() for h in next(reader, ()))
        if header != DRIVE_HEADER:
            raise DataError(f"{path}: expected header {','.join(DRIVE_HEADER)}, got {','.join(header)}")
        try:
            rows = np.array([[float(v) for v in row] for row in reader if row], dtype=np.float64)
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from exc
    if rows.size == 0:
        raise DataError(f"{path}: no samples")
    return RawDrive(rows[:, 0], rows[:, 1:])


def write_drive_csv(drive: RawDrive, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = np.column_stack([drive.t_ms, drive.values])
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(("t_ms",) + tuple(drive.channels)) + "\n")
        for row in table:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v: float) -> str:
    s = f"{v:.10g}"
    return "0" if s == "-0" else s


# -- preprocessing ----------------------------------------------------------------


def resample_10ms(raw: RawDrive, step_ms: float = SAMPLE_MS) -> RawDrive:
    """Linearly interpolate every channel onto a uniform grid from the first timestamp."""
    if len(raw) < 2:
        raise DataError("resampling needs at least two samples")
    n = int(math.floor((raw.t_ms[-1] - raw.t_ms[0]) / step_ms + 1e-9)) + 1
    grid = raw.t_ms[0] + step_ms * np.arange(n)
    values = np.column_stack([np.interp(grid, raw.t_ms, raw.values[:, j]) for j in range(raw.values.shape[1])])
    return RawDrive(grid, values, raw.channels)


def _released_runs(accel: np.ndarray) -> list[tuple[int, int]]:
    released = accel < ACCEL_RELEASED_PCT
    edges = np.diff(np.r_[0, released.astype(np.int8), 0])
    return list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)))


def extract_profiles(drive: RawDrive, drive_id: str = "drive", label: int | None = None) -> list[Profile]:
    """Split a resampled drive into deceleration profiles.

    Runs with the accelerator released are kept when their peak speed exceeds
    15 kph, their peak brake stroke exceeds 2 %, and |lateral acceleration|
    stays below 0.07 g on every sample.
    """
    accel = drive.channel("accel_pedal_pct")
    speed = drive.channel("speed_kph")
    brake = drive.channel("brake_pedal_pct")
    lat = drive.channel("lat_acc_g")
    profiles = []
    for a, b in _released_runs(accel):
        if b - a < 2:
            continue
        if not (speed[a:b].max() > MIN_PEAK_SPEED_KPH and brake[a:b].max() > MIN_PEAK_BRAKE_PCT):
            continue
        if not np.all(np.abs(lat[a:b]) < MAX_LAT_ACC_G):
            continue
        profiles.append(
            Profile(
                profile_id=f"{drive_id}_{len(profiles):02d}",
                values=drive.values[a:b].copy(),
                channels=drive.channels,
                label=label,
                t_ms=drive.t_ms[a:b].copy(),
            )
        )
    return profiles


def select_channels(profile: Profile, channels: Sequence[str]) -> Profile:
    idx = [profile.channels.index(c) for c in channels]
    return replace(profile, values=profile.values[:, idx], channels=tuple(channels))


def fit_normalizer(profiles: Sequence[Profile], channels: Sequence[str]) -> NormStats:
    if not profiles:
        raise DataError("cannot compute normalization statistics from an empty training set")
    stacked = np.concatenate([select_channels(p, channels).values for p in profiles], axis=0)
    std = np.maximum(stacked.std(axis=0), STD_FLOOR)
    return NormStats(tuple(channels), stacked.mean(axis=0), std)


def normalize(profiles: Sequence[Profile], stats: NormStats | None = None, channels: Sequence[str] | None = None):
    """Z-score the model channels; statistics come from ``profiles`` unless given."""
    if stats is None:
        stats = fit_normalizer(profiles, channels or DEFAULT_MODEL_CHANNELS)
    out = []
    for p in profiles:
        sel = select_channels(p, stats.channels)
        out.append(replace(sel, values=(sel.values - stats.mean) / stats.std))
    return out, stats


def make_windows(profile: Profile, w: int, s: int = 1) -> WindowBatch:
    """Sliding windows ``(k, n, w)`` starting at 0, s, 2s, ... while they fit."""
    if w < 2 or s < 1:
        raise ValueError(f"need w >= 2 and s >= 1, got w={w}, s={s}")
    length = len(profile)
    n = profile.values.shape[1]
    if length < w:
        return WindowBatch(np.zeros((0, n, w)), [], np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    starts = np.arange(0, length - w + 1, s)
    view = np.lib.stride_tricks.sliding_window_view(profile.values, w, axis=0)  # (length-w+1, n, w)
    data = np.ascontiguousarray(view[starts])
    if profile.timestamp_labels is not None:
        labels = np.array([int(profile.timestamp_labels[a : a + w].max()) for a in starts], dtype=np.int64)
    else:
        labels = np.full(starts.size, int(profile.label or 0), dtype=np.int64)
    return WindowBatch(data, [profile.profile_id] * starts.size, starts, labels)


def window_corpus(profiles: Sequence[Profile], w: int, s: int = 1) -> WindowBatch:
    """Concatenate the windows of every profile long enough for width ``w``."""
    parts = []
    skipped = 0
    for p in profiles:
        if len(p) < w:
            skipped += 1
            continue
        parts.append(make_windows(p, w, s))
    if skipped:
        log.warning("skipped %d profile(s) shorter than window %d", skipped, w)
    n = profiles[0].values.shape[1] if profiles else 0
    if not parts:
        return WindowBatch(np.zeros((0, n, w)), [], np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    return WindowBatch(
        np.concatenate([p.data for p in parts]),
        [pid for p in parts for pid in p.profile_ids],
        np.concatenate([p.starts for p in parts]),
        np.concatenate([p.labels for p in parts]),
    )


def iter_batches(windows: WindowBatch, batch_size: int, order: np.ndarray | None = None) -> Iterator[WindowBatch]:
    idx = np.arange(len(windows)) if order is None else np.asarray(order)
    for a in range(0, idx.size, batch_size):
        sel = idx[a : a + batch_size]
        yield WindowBatch(
            windows.data[sel],
            [windows.profile_ids[i] for i in sel],
            windows.starts[sel],
            windows.labels[sel],
        )


def count_windows(lengths: Sequence[int], w: int, s: int) -> int:
    return sum(max(0, (n - w) // s + 1) for n in lengths)


def split_profiles(profiles: Sequence[Profile], train_fraction: float = 0.8, seed: int = 0):
    """Train on a seeded ``train_fraction`` of the normal profiles; everything else is held out."""
    normals = [p for p in profiles if not p.label]
    others = [p for p in profiles if p.label]
    rng = np.random.default_rng(np.random.PCG64(seed))
    order = rng.permutation(len(normals))
    n_train = int(round(train_fraction * len(normals)))
    if train_fraction > 0 and normals:
        n_train = max(n_train, 1)
    train = [normals[i] for i in sorted(order[:n_train])]
    held = [normals[i] for i in sorted(order[n_train:])] + others
    held.sort(key=lambda p: p.profile_id)
    return train, held


# -- corpus directories ---------------------------------------------------------


def write_corpus(profiles: Sequence[Profile], out_dir) -> None:
    out_dir = Path(out_dir)
    pdir = out_dir / "profiles"
    pdir.mkdir(parents=True, exist_ok=True)
    for p in profiles:
        t = p.t_ms if p.t_ms is not None else SAMPLE_MS * np.arange(len(p))
        write_drive_csv(RawDrive(t, p.values, p.channels), pdir / f"{p.profile_id}.csv")
    with (out_dir / "labels.csv").open("w", newline="", encoding="utf-8") as fh:
        fh.write("profile_id,label\n")
        for p in profiles:
            fh.write(f"{p.profile_id},{int(p.label or 0)}\n")


def read_labels(path) -> dict[str, int]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["profile_id", "label"]:
            raise DataError(f"{path}: expected header profile_id,label")
        out = {}
        for row in reader:
            label = int(row["label"])
            if label not in (0, 1):
                raise DataError(f"{path}: label must be 0 or 1, got {label}")
            out[row["profile_id"]] = label
    return out


def read_corpus(corpus_dir) -> list[Profile]:
    """Load ``profiles/<id>.csv`` plus ``labels.csv`` (labels optional)."""
    corpus_dir = Path(corpus_dir)
    pdir = corpus_dir / "profiles"
    if not pdir.is_dir():
        raise DataError(f"{corpus_dir}: missing profiles/ directory")
    labels_path = corpus_dir / "labels.csv"
    labels = read_labels(labels_path) if labels_path.exists() else {}
    profiles = []
    for path in sorted(pdir.glob("*.csv")):
        drive = read_drive_csv(path)
        pid = path.stem
        profiles.append(Profile(pid, drive.values, drive.channels, labels.get(pid), drive.t_ms))
    return profiles


# -- benchmark matrices -----------------------------------------------------------


def _read_matrix(path) -> np.ndarray:
    arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{path}: non-finite entries")
    return arr


def load_benchmark(bench_dir) -> tuple[Profile, Profile]:
    """Read ``train.csv``, ``test.csv`` and ``test_label.csv`` (SMD/MSL/SMAP layout).

    Returns the training series and the test series with per-row labels.
    """
    bench_dir = Path(bench_dir)
    train = _read_matrix(bench_dir / "train.csv")
    test = _read_matrix(bench_dir / "test.csv")
    labels = np.loadtxt(bench_dir / "test_label.csv", delimiter=",", dtype=np.float64).reshape(-1)
    if train.shape[1] != test.shape[1]:
        raise DataError("train and test matrices have different column counts")
    if labels.size != test.shape[0]:
        raise DataError(f"{labels.size} labels for {test.shape[0]} test rows")
    channels = tuple(f"c{j}" for j in range(train.shape[1]))
    lab = labels.astype(np.int64)
    return (
        Profile("train", train, channels, 0),
        Profile("test", test, channels, int(lab.max()) if lab.size else 0, timestamp_labels=lab),
    )
