"""Car-following drive simulator and anomaly injection for synthetic corpora.

The ego vehicle follows a lead car. During the braking episode its commanded
acceleration is the more conservative of the constant-time-gap law and the
uniform-acceleration-motion law, clamped to [-6, 0] m/s^2, and the vehicle
responds through a first-order lag on top of a constant coasting drag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .data import DRIVE_CHANNELS, Profile, RawDrive, extract_profiles, resample_10ms

G = 9.81
DT = 0.01
MAX_DECEL = 6.0
ANOMALY_KINDS = ("late_brake", "oscillating", "non_converging")


def ctg_acceleration(eps_dot: float, delta: float, h_gap: float, lam: float) -> float:
    """Constant-time-gap law ``-(eps_dot + lam * delta) / h_gap``.

    ``eps_dot`` is the closing rate and ``delta`` the spacing error, signed so
    that positive values call for braking.
    """
    if h_gap <= 0:
        raise ValueError("time gap must be positive")
    return -(eps_dot + lam * delta) / h_gap


def uam_acceleration(v_front: float, v_ego: float, eps: float) -> float:
    """Uniform-acceleration law ``(v_front^2 - v_ego^2) / (2 eps)``."""
    if eps <= 0:
        raise ValueError("distance to the lead vehicle must be positive")
    return (v_front**2 - v_ego**2) / (2.0 * eps)


@dataclass(frozen=True)
class CtgParams:
    h_gap: float = 1.4  # s
    lam: float = 0.5  # 1/s
    eps: float = 28.0  # m, initial distance to the lead vehicle
    delta: float = 0.0  # m, initial spacing error
    v_front: float = 20.0  # m/s
    v_ego: float = 20.0  # m/s

    def validate(self) -> None:
        if not self.h_gap > 0:
            raise ValueError("h_gap must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.lam < 0 or self.v_front < 0 or self.v_ego < 0:
            raise ValueError("lam and speeds must be non-negative")


@dataclass(frozen=True)
class Scenario:
    cruise_s: float = 0.6
    brake_s: float = 1.2
    resume_s: float = 0.4
    lead_decel: float = 2.5  # m/s^2
    lead_brake_s: float = 0.6
    noise: float = 1.0  # 0 disables sensor noise


@dataclass(frozen=True)
class DriverStyle:
    lag_s: float = 0.25
    brake_gain: float = 10.0  # brake stroke % per m/s^2 of commanded deceleration
    coast_decel: float = 0.3  # m/s^2 with both pedals released

    @classmethod
    def sample(cls, rng: np.random.Generator) -> DriverStyle:
        return cls(
            lag_s=float(rng.uniform(0.15, 0.35)),
            brake_gain=float(rng.uniform(8.0, 12.0)),
            coast_decel=float(rng.uniform(0.25, 0.4)),
        )


def synthesize_drive(params: CtgParams, seed: int = 0, scenario: Scenario = Scenario(), style: DriverStyle | None = None) -> RawDrive:
    """Simulate one cruise -> braking -> resume drive sampled every 10 ms."""
    params.validate()
    rng = np.random.default_rng(np.random.PCG64(seed))
    style = style or DriverStyle.sample(rng)
    n_cruise = int(round(scenario.cruise_s / DT))
    n_brake = int(round(scenario.brake_s / DT))
    n_resume = int(round(scenario.resume_s / DT))
    n = n_cruise + n_brake + n_resume
    noise = scenario.noise

    gap = params.eps
    v_f, v_e = params.v_front, params.v_ego
    # spacing error = desired gap (h * v_ego + standstill offset) - actual gap
    offset = params.delta + params.eps - params.h_gap * params.v_ego
    a_e = 0.0
    out = np.zeros((n, len(DRIVE_CHANNELS)))
    for k in range(n):
        braking = n_cruise <= k < n_cruise + n_brake
        if braking and (k - n_cruise) * DT < scenario.lead_brake_s:
            a_f = -scenario.lead_decel
        elif k >= n_cruise + n_brake:
            a_f = 0.5
        else:
            a_f = 0.0
        if braking:
            eps_dot = v_e - v_f
            delta = params.h_gap * v_e + offset - gap
            a_cmd = min(ctg_acceleration(eps_dot, delta, params.h_gap, params.lam), uam_acceleration(v_f, v_e, gap))
            a_cmd = min(max(a_cmd, -MAX_DECEL), 0.0)
            a_target = a_cmd - style.coast_decel
            accel_pedal = min(abs(rng.normal(0.0, 0.05)), 0.3) * noise
            brake_pedal = style.brake_gain * -a_cmd
        else:
            a_cmd = 0.0
            a_target = 0.0 if k < n_cruise else 0.5
            accel_pedal = 15.0 + (5.0 if k >= n_cruise else 0.0) + rng.normal(0.0, 0.5) * noise
            brake_pedal = 0.0
        a_e += (a_target - a_e) * DT / style.lag_s
        v_e = max(v_e + a_e * DT, 0.0)
        v_f = max(v_f + a_f * DT, 0.0)
        gap = max(gap + (v_f - v_e) * DT, 0.5)
        if braking:
            brake_pedal = max(brake_pedal + rng.normal(0.0, 0.1) * noise, 0.0)
        out[k] = (
            accel_pedal,
            brake_pedal,
            v_e * 3.6 + rng.normal(0.0, 0.05) * noise,
            float(np.clip(rng.normal(0.0, 0.005), -0.03, 0.03)) * noise,
            a_e / G + rng.normal(0.0, 0.002) * noise,
        )
    t_ms = DT * 1000.0 * np.arange(n)
    return RawDrive(t_ms, out)


def _recompute(profile: Profile, accel: np.ndarray, gain: float = 10.0) -> Profile:
    ch = profile.channels
    values = profile.values.copy()
    old = values[:, ch.index("long_acc_g")] * G
    speed0 = values[0, ch.index("speed_kph")] / 3.6
    speed_noise = values[:, ch.index("speed_kph")] / 3.6 - (speed0 + np.r_[0.0, np.cumsum(old[1:]) * DT])
    v = np.maximum(speed0 + np.r_[0.0, np.cumsum(accel[1:]) * DT], 0.0)
    values[:, ch.index("long_acc_g")] = accel / G
    values[:, ch.index("speed_kph")] = (v + speed_noise) * 3.6
    brake = values[:, ch.index("brake_pedal_pct")] + gain * (old - accel)
    values[:, ch.index("brake_pedal_pct")] = np.maximum(brake, 0.0)
    return replace(profile, values=values, label=1)


def perturb_profile(profile: Profile, kind: str, rng: np.random.Generator) -> Profile:
    """Distort the deceleration of one profile so it no longer settles smoothly."""
    accel = profile.channel("long_acc_g") * G
    L = accel.size
    u = np.arange(L) / max(L - 1, 1)
    if kind == "late_brake":
        center = rng.uniform(0.65, 0.85)
        depth = rng.uniform(3.5, 5.5)
        new = 0.25 * accel - depth * np.exp(-0.5 * ((u - center) / 0.08) ** 2)
    elif kind == "oscillating":
        amp = rng.uniform(1.2, 2.0)
        period = rng.uniform(0.25, 0.45) / DT
        phase = rng.uniform(0, 2 * math.pi)
        new = accel + amp * np.sin(2 * math.pi * np.arange(L) / period + phase)
    elif kind == "non_converging":
        new = accel - rng.uniform(2.5, 4.0) * u**1.5 - rng.uniform(0.3, 0.8)
    else:
        raise ValueError(f"unknown anomaly kind {kind!r}")
    return _recompute(profile, new)


def inject_anomalies(profiles: Sequence[Profile], ratio: float, kinds: Sequence[str] = ANOMALY_KINDS, seed: int = 0) -> list[Profile]:
    """Label ``ceil(ratio * count)`` seeded-random profiles anomalous and distort them."""
    if not profiles:
        raise ValueError("no profiles to inject anomalies into")
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"ratio must lie in [0, 1], got {ratio}")
    if ratio > 0 and not kinds:
        raise ValueError("need at least one anomaly kind")
    rng = np.random.default_rng(np.random.PCG64(seed))
    count = math.ceil(ratio * len(profiles) - 1e-9)
    chosen = set(rng.choice(len(profiles), size=count, replace=False).tolist()) if count else set()
    out = []
    for i, p in enumerate(profiles):
        if i in chosen:
            kind = kinds[int(rng.integers(len(kinds)))]
            out.append(perturb_profile(p, kind, rng))
        else:
            out.append(replace(p, values=p.values.copy(), label=0))
    return out


@dataclass(frozen=True)
class CorpusSpec:
    n_drives: int = 60
    anomaly_ratio: float = 0.6
    kinds: tuple[str, ...] = ANOMALY_KINDS
    noise: float = 1.0


def sample_drive(rng: np.random.Generator, noise: float = 1.0) -> tuple[CtgParams, Scenario, int]:
    v0 = float(rng.uniform(15.0, 28.0))
    h_gap = float(rng.uniform(1.2, 1.8))
    params = CtgParams(h_gap=h_gap, lam=float(rng.uniform(0.3, 0.7)), eps=h_gap * v0, delta=0.0, v_front=v0, v_ego=v0)
    scenario = Scenario(
        cruise_s=0.5,
        brake_s=float(rng.integers(100, 161)) * DT,
        resume_s=0.3,
        lead_decel=float(rng.uniform(1.5, 3.5)),
        lead_brake_s=float(rng.uniform(0.4, 0.9)),
        noise=noise,
    )
    return params, scenario, int(rng.integers(0, 2**31 - 1))


def generate_corpus(spec: CorpusSpec = CorpusSpec(), seed: int = 0) -> tuple[list[RawDrive], list[Profile]]:
    """Simulate ``n_drives`` drives, extract one profile from each and inject anomalies."""
    rng = np.random.default_rng(np.random.PCG64(seed))
    drives, profiles = [], []
    for i in range(spec.n_drives):
        params, scenario, drive_seed = sample_drive(rng, spec.noise)
        drive = synthesize_drive(params, drive_seed, scenario)
        drives.append(drive)
        found = extract_profiles(resample_10ms(drive), drive_id=f"drive{i:04d}")
        if len(found) != 1:
            raise RuntimeError(f"simulated drive {i} produced {len(found)} profiles")
        profiles.append(found[0])
    profiles = inject_anomalies(profiles, spec.anomaly_ratio, spec.kinds, seed=int(rng.integers(0, 2**31 - 1)))
    return drives, profiles
