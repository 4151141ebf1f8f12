"""Sliding windows, puff-end labeling and rotation augmentation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .signal import Recording

UNLABELED = 0


@dataclass(frozen=True)
class PuffAnnotation:
    start_epoch_s: float
    end_epoch_s: float

    def __post_init__(self):
        if self.start_epoch_s > self.end_epoch_s:
            raise ValueError("puff start must not come after its end")


@dataclass
class Annotations:
    """Ground truth for one recording: puff intervals and session intervals."""

    puffs: list[PuffAnnotation] = field(default_factory=list)
    sessions: list[tuple[float, float]] = field(default_factory=list)

    @property
    def puff_intervals(self) -> list[tuple[float, float]]:
        return [(p.start_epoch_s, p.end_epoch_s) for p in self.puffs]

    @property
    def puff_ends(self) -> np.ndarray:
        return np.array([p.end_epoch_s for p in self.puffs], dtype=np.float64)


@dataclass(frozen=True)
class Window:
    data: np.ndarray
    end_epoch_s: float
    label: int = UNLABELED


@dataclass
class WindowSet:
    """A batch of equally sized windows stored as one ``(N, W_L, 6)`` array.

    ``data`` is usually a read-only strided view into the source recording,
    so extracting every window of an all-day recording costs no copy.
    """

    data: np.ndarray
    end_epochs: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return self.data.shape[0]

    def __getitem__(self, i) -> Window:
        return Window(self.data[i], float(self.end_epochs[i]), int(self.labels[i]))

    def __iter__(self) -> Iterator[Window]:
        return (self[i] for i in range(len(self)))

    def take(self, index) -> "WindowSet":
        return WindowSet(self.data[index], self.end_epochs[index], self.labels[index])

    @classmethod
    def empty(cls, win_len: int) -> "WindowSet":
        return cls(np.zeros((0, win_len, 6)), np.zeros(0), np.zeros(0, dtype=np.int8))

    @classmethod
    def concatenate(cls, sets: Sequence["WindowSet"]) -> "WindowSet":
        return cls(
            np.concatenate([s.data for s in sets]),
            np.concatenate([s.end_epochs for s in sets]),
            np.concatenate([s.labels for s in sets]),
        )

    @classmethod
    def from_windows(cls, windows: Sequence[Window]) -> "WindowSet":
        return cls(
            np.stack([w.data for w in windows]),
            np.array([w.end_epoch_s for w in windows], dtype=np.float64),
            np.array([w.label for w in windows], dtype=np.int8),
        )


def window_geometry(fs: float, win_len_s: float = 4.5, step_s: float = 0.5) -> tuple[int, int]:
    """Window length and step in samples, rounded to the nearest integer."""
    win = int(round(win_len_s * fs))
    step = int(round(step_s * fs))
    if win < 1 or step < 1:
        raise ValueError("window length and step must cover at least one sample")
    return win, step


def window_count(m: int, win: int, step: int) -> int:
    return 0 if m < win else (m - win) // step + 1


def extract_windows(rec: Recording, win_len_s: float = 4.5, step_s: float = 0.5) -> WindowSet:
    """Cut ``rec`` into windows at sample offsets 0, step, 2*step, ...

    Each window is stamped with its right edge, ``start + (offset + W_L) / fs``
    (4.5 s after the recording start for the first window). A recording
    shorter than one window yields an empty set.
    """
    fs = rec.sample_rate_hz
    win, step = window_geometry(fs, win_len_s, step_s)
    n = window_count(len(rec), win, step)
    if n == 0:
        return WindowSet.empty(win)
    view = sliding_window_view(rec.samples, win, axis=0)[::step][:n]
    data = view.transpose(0, 2, 1)
    offsets = np.arange(n) * step
    end_epochs = rec.start_epoch_s + (offsets + win) / fs
    return WindowSet(data, end_epochs, np.zeros(n, dtype=np.int8))


def label_window(end_epoch_s: float, puff_ends, epsilon_s: float = 1.5) -> int:
    """+1 if some puff ends within ``epsilon_s`` of the window's right edge, else -1."""
    ends = _puff_ends(puff_ends)
    if ends.size == 0:
        return -1
    return 1 if np.min(np.abs(ends - end_epoch_s)) <= epsilon_s else -1


def label_windows(end_epochs, puff_ends, epsilon_s: float = 1.5) -> np.ndarray:
    """Vectorized :func:`label_window` over sorted puff end times."""
    t = np.asarray(end_epochs, dtype=np.float64)
    ends = np.sort(_puff_ends(puff_ends))
    labels = -np.ones(t.shape, dtype=np.int8)
    if ends.size == 0:
        return labels
    # nearest puff end is either the first end >= t or the one before it
    idx = np.searchsorted(ends, t)
    right = np.abs(ends[np.minimum(idx, ends.size - 1)] - t)
    left = np.abs(ends[np.maximum(idx - 1, 0)] - t)
    labels[np.minimum(left, right) <= epsilon_s] = 1
    return labels


def _puff_ends(puffs) -> np.ndarray:
    return np.array(
        [p.end_epoch_s if isinstance(p, PuffAnnotation) else p for p in puffs], dtype=np.float64
    )


def rotation_matrix(axis: str, angle_deg: float) -> np.ndarray:
    """Right-handed rotation about ``x`` or ``z``; R_x(90) maps (0,1,0) to (0,0,1)."""
    th = np.deg2rad(angle_deg)
    c, s = np.cos(th), np.sin(th)
    axis = axis.lower()
    if axis == "x":
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    if axis == "z":
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    raise ValueError(f"unsupported rotation axis {axis!r}")


def augmentation_rotation(theta_x: float, theta_z: float, case: int) -> np.ndarray:
    """Rotation for one of the four watch-slip cases.

    0: about x only, 1: about z only, 2: x then z, 3: z then x.
    """
    rx = rotation_matrix("x", theta_x)
    rz = rotation_matrix("z", theta_z)
    return (rx, rz, rz @ rx, rx @ rz)[case]


def draw_rotation(rng: np.random.Generator, sigma_deg: float = 10.0) -> np.ndarray:
    theta_x, theta_z = rng.normal(0.0, sigma_deg, size=2)
    case = int(rng.integers(4))
    return augmentation_rotation(theta_x, theta_z, case)


def rotate_samples(data: np.ndarray, rot: np.ndarray) -> np.ndarray:
    """Apply ``rot`` to both the accelerometer and gyroscope triple of every sample."""
    out = np.empty(data.shape, dtype=np.float64)
    out[..., 0:3] = data[..., 0:3] @ rot.T
    out[..., 3:6] = data[..., 3:6] @ rot.T
    return out


def augment_window(w: Window, rng: np.random.Generator, sigma_deg: float = 10.0) -> Window:
    return replace(w, data=rotate_samples(w.data, draw_rotation(rng, sigma_deg)))


def build_training_set(
    recordings: Sequence[tuple[Recording, Sequence[PuffAnnotation]]],
    augment_factor: int = 1,
    *,
    win_len_s: float = 4.5,
    step_s: float = 0.5,
    epsilon_s: float = 1.5,
    negative_ratio: float | None = None,
    sigma_deg: float = 10.0,
    seed: int = 0,
) -> WindowSet:
    """Labeled windows from preprocessed recordings plus rotated copies.

    ``augment_factor`` rotated copies of every window are appended after
    the originals. Copy ``k`` of window ``i`` is drawn from a generator
    seeded with ``(seed, i, k)``, so the result does not depend on how the
    work is ordered. ``negative_ratio`` (off by default) keeps at most that
    many negatives per positive, chosen at random.
    """
    if augment_factor < 0:
        raise ValueError("augment_factor must be non-negative")
    parts = []
    for rec, puffs in recordings:
        ws = extract_windows(rec, win_len_s, step_s)
        if len(ws):
            ws.labels = label_windows(ws.end_epochs, puffs, epsilon_s)
            parts.append(ws)
    if not parts:
        win, _ = window_geometry(recordings[0][0].sample_rate_hz if recordings else 50.0,
                                 win_len_s, step_s)
        return WindowSet.empty(win)
    base = WindowSet.concatenate(parts)

    if negative_ratio is not None:
        pos = np.flatnonzero(base.labels == 1)
        neg = np.flatnonzero(base.labels != 1)
        keep = min(neg.size, int(round(negative_ratio * max(pos.size, 1))))
        sub_rng = np.random.default_rng([seed, 0x5EED])
        neg = np.sort(sub_rng.choice(neg, size=keep, replace=False))
        base = base.take(np.sort(np.concatenate([pos, neg])))

    copies = [base]
    for k in range(1, augment_factor + 1):
        data = np.empty(base.data.shape)
        for i in range(len(base)):
            rng = np.random.default_rng([seed, i, k])
            data[i] = rotate_samples(base.data[i], draw_rotation(rng, sigma_deg))
        copies.append(WindowSet(data, base.end_epochs.copy(), base.labels.copy()))
    return WindowSet.concatenate(copies)
