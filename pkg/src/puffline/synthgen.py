"""Synthetic all-day wrist recordings with planted puff gestures.

Each subject gets one recording of background arm motion with a number of
smoking sessions, each a series of raise-hold-lower puff gestures. Duration
statistics default to the values measured on real smoking data (puff median
4.75 s / std 1.47 s, session mean 485 s / std 197 s).

Kinematic model
---------------
The forearm pitch ``theta`` and wrist roll ``phi`` (degrees) drive the
gravity projection on the accelerometer,

    a = g * (-sin(theta), cos(theta) sin(phi), cos(theta) cos(phi))

and their rates appear on the gyroscope (g_y = d theta / dt, g_x = d phi / dt).
Background motion is an Ornstein-Uhlenbeck walk on both angles plus
band-limited sensor noise. A puff adds a half-cosine raise to the mouth,
a hold with slight tremor, and a half-cosine lowering that ends exactly at
the annotated puff end. Raise and lower take about a second whatever the
puff length (at most a third of it for short puffs); longer puffs hold
longer. This keeps the gesture energy above the 1 Hz high-pass cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import signal as sps

from .signal import Recording, Wrist, mirror_hand
from .windows import Annotations, PuffAnnotation

GRAVITY = 9.81
BASE_EPOCH = 1_600_000_000.0


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 5
    sessions_per_subject: int = 3
    puffs_per_session: tuple[int, int] = (8, 14)
    puff_median_s: float = 4.75
    puff_std_s: float = 1.47
    puff_bounds_s: tuple[float, float] = (2.0, 12.0)
    session_mean_s: float = 485.14
    session_std_s: float = 197.32
    min_puff_spacing_s: float = 20.0
    inter_session_gap_s: tuple[float, float] = (250.0, 900.0)
    lead_in_s: tuple[float, float] = (60.0, 240.0)
    day_duration_s: float = 3600.0
    noise_amplitude: float = 1.0
    gesture_amplitude: float = 1.0
    left_wrist_fraction: float = 0.4
    fs: float = 50.0
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.puffs_per_session
        if self.n_subjects < 1 or self.sessions_per_subject < 0 or not 1 <= lo <= hi:
            raise ValueError("invalid subject/session/puff counts")
        if self.inter_session_gap_s[0] < 250.0 or self.inter_session_gap_s[0] > self.inter_session_gap_s[1]:
            raise ValueError("inter-session gaps must be at least 250 s")
        if self.puff_median_s <= 0 or self.puff_std_s <= 0 or self.fs <= 0:
            raise ValueError("durations and sampling rate must be positive")


class SyntheticSubject(NamedTuple):
    subject_id: str
    recording: Recording
    annotations: Annotations


def lognormal_params(median: float, std: float) -> tuple[float, float]:
    """(mu, sigma) of the log-normal with the given median and standard deviation."""
    r = (std / median) ** 2
    a = (1.0 + np.sqrt(1.0 + 4.0 * r)) / 2.0  # a = exp(sigma^2) solves a^2 - a = r
    return float(np.log(median)), float(np.sqrt(np.log(a)))


def draw_puff_durations(cfg: SynthConfig, rng: np.random.Generator, size) -> np.ndarray:
    mu, sigma = lognormal_params(cfg.puff_median_s, cfg.puff_std_s)
    return np.clip(rng.lognormal(mu, sigma, size), *cfg.puff_bounds_s)


def _ou(rng, n, fs, tau_s, std):
    """Stationary Ornstein-Uhlenbeck path, sampled at ``fs``."""
    a = np.exp(-1.0 / (tau_s * fs))
    drive = rng.normal(0.0, std * np.sqrt(1 - a * a), n)
    drive[0] = rng.normal(0.0, std)
    return sps.lfilter([1.0], [1.0, -a], drive)


def _bandlimited(rng, n, fs, cutoff_hz, std):
    b, a = sps.butter(2, cutoff_hz / (fs / 2))
    x = sps.lfilter(b, a, rng.normal(0.0, 1.0, n + int(fs * 4)))[int(fs * 4):]
    return x * (std / max(x.std(), 1e-12))


def _ramp(u):
    """Half-cosine rise from 0 to 1 over u in [0, 1]."""
    return 0.5 - 0.5 * np.cos(np.pi * np.clip(u, 0.0, 1.0))


def _plan_timeline(cfg: SynthConfig, rng: np.random.Generator):
    """Session and puff intervals, in seconds from the recording start."""
    sessions, puffs = [], []
    t = rng.uniform(*cfg.lead_in_s)
    for s in range(cfg.sessions_per_subject):
        if s:
            t += rng.uniform(*cfg.inter_session_gap_s)
        n_puffs = int(rng.integers(cfg.puffs_per_session[0], cfg.puffs_per_session[1] + 1))
        duration = max(rng.normal(cfg.session_mean_s, cfg.session_std_s),
                       n_puffs * cfg.min_puff_spacing_s)
        slot = duration / n_puffs
        lengths = draw_puff_durations(cfg, rng, n_puffs)
        for j, d in enumerate(lengths):
            d = min(d, 0.6 * slot)
            free = slot - d
            start = t + j * slot + free * rng.uniform(0.2, 0.8)
            puffs.append((start, start + d))
        sessions.append((t, t + duration))
        t += duration
    if t > cfg.day_duration_s - 10.0:
        raise ValueError(
            f"{cfg.sessions_per_subject} sessions need {t:.0f} s but the day lasts "
            f"{cfg.day_duration_s:.0f} s"
        )
    return sessions, puffs


def _render(cfg: SynthConfig, rng: np.random.Generator, puffs) -> np.ndarray:
    fs = cfg.fs
    n = int(round(cfg.day_duration_s * fs))
    t = np.arange(n) / fs
    na, ga = cfg.noise_amplitude, cfg.gesture_amplitude

    # subject style
    pitch_gain = rng.uniform(0.8, 1.2)
    roll_gain = rng.uniform(0.6, 1.4) * rng.choice([-1.0, 1.0])
    tremor_phase = rng.uniform(0, 2 * np.pi)

    pitch = _ou(rng, n, fs, 4.0, 15.0 * na) - 20.0
    roll = _ou(rng, n, fs, 6.0, 12.0 * na)
    for start, end in puffs:
        d = end - start
        up = min(rng.uniform(0.7, 1.2), d / 3)
        down = min(rng.uniform(0.7, 1.2), d / 3)
        amp = ga * pitch_gain * rng.uniform(85.0, 110.0)
        roll_amp = ga * roll_gain * rng.uniform(25.0, 45.0)
        i0, i1 = int(np.floor(start * fs)), min(n, int(np.ceil(end * fs)) + 1)
        tt = t[i0:i1]
        shape = _ramp((tt - start) / up) - _ramp((tt - (end - down)) / down)
        tremor = 1.0 + 0.03 * np.sin(2 * np.pi * 1.3 * (tt - start) + tremor_phase)
        pitch[i0:i1] += amp * shape * tremor
        roll[i0:i1] += roll_amp * shape

    th, ph = np.deg2rad(pitch), np.deg2rad(roll)
    out = np.empty((n, 6))
    out[:, 0] = -GRAVITY * np.sin(th)
    out[:, 1] = GRAVITY * np.cos(th) * np.sin(ph)
    out[:, 2] = GRAVITY * np.cos(th) * np.cos(ph)
    out[:, 3] = np.gradient(roll, 1 / fs)
    out[:, 4] = np.gradient(pitch, 1 / fs)
    out[:, 5] = 0.0
    for ch, std in ((0, 0.6), (1, 0.6), (2, 0.6), (3, 8.0), (4, 8.0), (5, 10.0)):
        out[:, ch] += _bandlimited(rng, n, fs, 4.0, std * na)
        out[:, ch] += rng.normal(0.0, 0.02 * std, n)
    return out


def generate_subject(cfg: SynthConfig, index: int) -> SyntheticSubject:
    rng = np.random.default_rng([cfg.seed, index])
    subject_id = f"S{index + 1:02d}"
    wrist = Wrist.LEFT if rng.random() < cfg.left_wrist_fraction else Wrist.RIGHT
    sessions, puffs = _plan_timeline(cfg, rng)
    samples = _render(cfg, rng, puffs)
    start_epoch = BASE_EPOCH + index * 86_400.0
    rec = Recording(samples, cfg.fs, start_epoch, Wrist.RIGHT, subject_id)
    if wrist is Wrist.LEFT:
        rec = mirror_hand(rec, force=True)
    ann = Annotations(
        puffs=[PuffAnnotation(start_epoch + s, start_epoch + e) for s, e in puffs],
        sessions=[(start_epoch + s, start_epoch + e) for s, e in sessions],
    )
    return SyntheticSubject(subject_id, rec, ann)


def generate_dataset(cfg: SynthConfig) -> list[SyntheticSubject]:
    """One all-day recording per subject; subject ``i`` is seeded by ``(seed, i)``."""
    return [generate_subject(cfg, i) for i in range(cfg.n_subjects)]
