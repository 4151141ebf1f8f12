"""Wrist IMU recordings: handedness normalization, resampling and gravity removal."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum

import numpy as np

CHANNELS = ("ax", "ay", "az", "gx", "gy", "gz")
ACC = slice(0, 3)
GYRO = slice(3, 6)

# a_x, g_y, g_z flip sign when moving the watch from the left to the right wrist
MIRROR_SIGNS = np.array([-1.0, 1.0, 1.0, 1.0, -1.0, -1.0])


class Wrist(str, Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class Recording:
    """Uniformly sampled 6-axis stream (3D acceleration, 3D angular velocity).

    Sample ``i`` occurs at ``start_epoch_s + i / sample_rate_hz``.
    """

    samples: np.ndarray
    sample_rate_hz: float = 50.0
    start_epoch_s: float = 0.0
    wrist: Wrist = Wrist.RIGHT
    subject_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[1] != 6:
            raise ValueError(f"samples must be M x 6, got shape {samples.shape}")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "wrist", Wrist(self.wrist))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    @property
    def timestamps(self) -> np.ndarray:
        return self.start_epoch_s + np.arange(len(self)) / self.sample_rate_hz

    def replace(self, **changes) -> "Recording":
        return dataclasses.replace(self, **changes)

    def crop(self, start_epoch_s: float, end_epoch_s: float) -> "Recording":
        """Samples whose timestamps fall in ``[start_epoch_s, end_epoch_s]``."""
        fs = self.sample_rate_hz
        i0 = max(0, int(np.ceil((start_epoch_s - self.start_epoch_s) * fs - 1e-9)))
        i1 = min(len(self), int(np.floor((end_epoch_s - self.start_epoch_s) * fs + 1e-9)) + 1)
        i1 = max(i0, i1)
        return self.replace(samples=self.samples[i0:i1], start_epoch_s=self.start_epoch_s + i0 / fs)


@dataclass(frozen=True)
class FirFilter:
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.float64)
        if c.ndim != 1 or c.size == 0 or not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be a non-empty finite vector")
        object.__setattr__(self, "coefficients", c)

    @property
    def taps(self) -> int:
        return len(self.coefficients)

    @property
    def group_delay_samples(self) -> float:
        return (self.taps - 1) / 2

    @property
    def alignment_shift(self) -> int:
        """Integer shift used to re-align filtered output; half-sample short for even taps."""
        return (self.taps - 1) // 2

    def response(self, freqs_hz, fs_hz: float) -> np.ndarray:
        """Complex frequency response evaluated by a direct DFT sum over the taps."""
        freqs = np.atleast_1d(np.asarray(freqs_hz, dtype=np.float64))
        n = np.arange(self.taps)
        phasor = np.exp(-2j * np.pi * np.outer(freqs, n) / fs_hz)
        return phasor @ self.coefficients


def mirror_hand(rec: Recording, *, force: bool = False) -> Recording:
    """Map a left-wrist recording into the right-wrist frame.

    Negates a_x, g_y and g_z. Mirroring an already right-handed recording is
    refused unless ``force`` is set.
    """
    if rec.wrist is not Wrist.LEFT and not force:
        raise ValueError("recording is already in the right-wrist frame")
    wrist = Wrist.RIGHT if rec.wrist is Wrist.LEFT else Wrist.LEFT
    return rec.replace(samples=rec.samples * MIRROR_SIGNS, wrist=wrist)


def design_highpass(cutoff_hz: float = 1.0, taps: int = 512, fs_hz: float = 50.0) -> FirFilter:
    """Linear-phase high-pass FIR from a Hamming-windowed sinc low-pass.

    The low-pass is spectrally inverted against a windowed delay centred at
    ``(taps - 1) / 2``. For odd ``taps`` that delay is a unit impulse on the
    centre tap; for even ``taps`` it is the half-sample sinc delay, which
    puts a zero at Nyquist (unavoidable for symmetric even-length filters).
    Both parts are normalized to unit DC gain so the result has an exact DC
    null.
    """
    if not 0 < cutoff_hz < fs_hz / 2:
        raise ValueError(f"cutoff must lie in (0, {fs_hz / 2}) Hz, got {cutoff_hz}")
    if int(taps) != taps or taps < 3:
        raise ValueError(f"taps must be an integer >= 3, got {taps}")
    taps = int(taps)
    centre = (taps - 1) / 2
    n = np.arange(taps) - centre
    window = np.hamming(taps)
    fc = cutoff_hz / fs_hz

    lowpass = 2 * fc * np.sinc(2 * fc * n) * window
    lowpass /= lowpass.sum()
    if taps % 2:
        delay = np.zeros(taps)
        delay[taps // 2] = 1.0
    else:
        delay = np.sinc(n) * window
        delay /= delay.sum()

    coeffs = delay - lowpass
    coeffs = 0.5 * (coeffs + coeffs[::-1])
    coeffs -= coeffs.mean()
    return FirFilter(coefficients=coeffs)


def apply_highpass(rec: Recording, filt: FirFilter) -> Recording:
    """High-pass the acceleration channels; gyro channels pass through untouched.

    Causal convolution with zero-padded edges, then shifted left by
    ``filt.alignment_shift`` samples so the output lines up with the input
    timeline. Output length equals input length.
    """
    if len(rec) == 0:
        raise ValueError("cannot filter an empty recording")
    m = len(rec)
    shift = filt.alignment_shift
    out = rec.samples.copy()
    for ch in range(ACC.start, ACC.stop):
        full = np.convolve(rec.samples[:, ch], filt.coefficients)
        out[:, ch] = full[shift:shift + m]
    return rec.replace(samples=out)


def resample_uniform(timestamps, values, target_fs: float = 50.0, **meta) -> Recording:
    """Linearly interpolate jittered samples onto a uniform grid.

    The grid starts at the first timestamp and covers ``[first, last]``.
    Extra keyword arguments (``wrist``, ``subject_id``) go to the Recording.
    """
    t = np.asarray(timestamps, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if t.ndim != 1 or t.size < 2:
        raise ValueError("need at least two timestamps")
    if v.shape != (t.size, 6):
        raise ValueError(f"values must be {t.size} x 6, got {v.shape}")
    if np.any(np.diff(t) <= 0):
        raise ValueError("timestamps must be strictly increasing")
    if not target_fs > 0:
        raise ValueError("target_fs must be positive")

    # offsets from the first sample keep precision for epoch-scale timestamps
    rel = t - t[0]
    # knots within a few microseconds of the grid are float noise from large
    # epoch values; snapping them keeps already-uniform input exact
    pos = rel * target_fs
    snap = np.abs(pos - np.round(pos)) < 1e-4
    rel = np.where(snap, np.round(pos) / target_fs, rel)
    count = int(np.floor(rel[-1] * target_fs + 1e-6)) + 1
    grid = np.arange(count) / target_fs
    out = np.empty((count, 6))
    for ch in range(6):
        out[:, ch] = np.interp(grid, rel, v[:, ch])
    return Recording(samples=out, sample_rate_hz=target_fs, start_epoch_s=float(t[0]), **meta)


def preprocess(rec: Recording, filt: FirFilter | None = None) -> Recording:
    """Mirror left-wrist data into the right-wrist frame, then remove gravity."""
    if rec.wrist is Wrist.LEFT:
        rec = mirror_hand(rec)
    if filt is None:
        filt = design_highpass(fs_hz=rec.sample_rate_hz)
    return apply_highpass(rec, filt)
