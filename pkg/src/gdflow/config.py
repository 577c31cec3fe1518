"""Run configuration and the flat ``key = value`` config file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from .data import DEFAULT_MODEL_CHANNELS
from .synthetic import ANOMALY_KINDS


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    window: int = 0  # 0 -> shortest profile length in the corpus
    stride: int = 1
    batch_size: int = 256
    epochs: int = 10
    lr: float = 3e-3
    weight_decay: float = 5e-4
    hidden: int = 32
    flow_blocks: int = 1
    q: float = 0.05
    cheb_k: int = 2
    embed_dim: int = 8
    channels: tuple[str, ...] = DEFAULT_MODEL_CHANNELS
    seed: int = 0
    no_ncde: bool = False
    no_quantile: bool = False
    train_split: float = 0.8
    expected_anomaly_rate: float = 0.4
    # synthetic corpus generation
    n_drives: int = 60
    anomaly_ratio: float = 0.6
    anomaly_kinds: tuple[str, ...] = ANOMALY_KINDS
    noise: float = 1.0

    def validate(self) -> RunConfig:
        checks = [
            (self.window == 0 or self.window >= 2, "window must be 0 (auto) or >= 2"),
            (self.stride >= 1, "stride must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.epochs >= 0, "epochs must be >= 0"),
            (self.lr > 0, "lr must be positive"),
            (self.weight_decay >= 0, "weight_decay must be >= 0"),
            (self.hidden >= 1, "hidden must be >= 1"),
            (self.flow_blocks >= 1, "flow_blocks must be >= 1"),
            (0.0 <= self.q < 1.0, "q must lie in [0, 1)"),
            (self.cheb_k >= 0, "cheb_k must be >= 0"),
            (self.embed_dim >= 1, "embed_dim must be >= 1"),
            (len(self.channels) >= 1, "need at least one channel"),
            (0 <= self.seed < 2**64, "seed must fit in an unsigned 64-bit integer"),
            (0.0 < self.train_split <= 1.0, "train_split must lie in (0, 1]"),
            (0.0 <= self.expected_anomaly_rate < 1.0, "expected_anomaly_rate must lie in [0, 1)"),
            (self.n_drives >= 1, "n_drives must be >= 1"),
            (0.0 <= self.anomaly_ratio <= 1.0, "anomaly_ratio must lie in [0, 1]"),
            (set(self.anomaly_kinds) <= set(ANOMALY_KINDS), f"anomaly_kinds must be among {ANOMALY_KINDS}"),
            (self.noise >= 0, "noise must be >= 0"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        return self

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, values: dict[str, Any]) -> RunConfig:
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(known[key], raw)
        return cls(**kwargs).validate()

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes).validate()


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(f: dataclasses.Field, raw: Any) -> Any:
    default = f.default if f.default is not dataclasses.MISSING else f.default_factory()  # type: ignore[misc]
    if not isinstance(raw, str):
        return tuple(raw) if isinstance(default, tuple) else raw
    text = raw.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(part.strip() for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"bad value for {f.name}: {raw!r}") from None
    return text


def parse_config_text(text: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Read a config file (if any) and apply overrides; overrides win."""
    values: dict[str, Any] = {}
    if path is not None:
        try:
            values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return RunConfig.from_dict(values)


def format_config(config: RunConfig) -> str:
    lines = []
    for key, value in config.to_dict().items():
        if isinstance(value, tuple):
            value = ",".join(value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
    return "\n".join(lines) + "\n"
