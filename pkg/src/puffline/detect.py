"""Probability traces over sliding windows and puff extraction from their peaks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import PuffModel
from .signal import Recording
from .windows import extract_windows


@dataclass(frozen=True)
class ProbabilityTrace:
    probs: np.ndarray
    end_epochs: np.ndarray
    step_s: float = 0.5

    def __post_init__(self):
        if len(self.probs) != len(self.end_epochs):
            raise ValueError("probs and end_epochs differ in length")

    def __len__(self):
        return len(self.probs)


@dataclass(frozen=True)
class PuffSet:
    timestamps: np.ndarray

    def __len__(self):
        return len(self.timestamps)

    def __iter__(self):
        return iter(self.timestamps.tolist())


def predict_recording(model: PuffModel, rec: Recording, win_len_s: float = 4.5,
                      step_s: float = 0.5, batch_size: int = 256) -> ProbabilityTrace:
    """Forward every window of a preprocessed recording in inference mode."""
    ws = extract_windows(rec, win_len_s, step_s)
    if len(ws) == 0:
        raise ValueError("recording is shorter than one window")
    return ProbabilityTrace(model.predict(ws.data, batch_size), ws.end_epochs, step_s)


def local_maxima(x) -> np.ndarray:
    """Indices of local maxima.

    A run of equal values counts as a maximum when every existing neighbour
    outside the run is strictly lower; the run's first index is reported.
    Boundary runs only need their single inner neighbour to be lower.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n == 0:
        return np.zeros(0, dtype=np.intp)
    change = np.flatnonzero(np.diff(x) != 0) + 1
    starts = np.concatenate(([0], change))
    vals = x[starts]
    left_ok = np.ones(starts.size, dtype=bool)
    right_ok = np.ones(starts.size, dtype=bool)
    left_ok[1:] = vals[:-1] < vals[1:]
    right_ok[:-1] = vals[1:] < vals[:-1]
    return starts[left_ok & right_ok]


def select_by_distance(peaks, heights, min_distance: int) -> np.ndarray:
    """Greedy suppression: keep the highest peaks first, dropping any closer
    than ``min_distance`` samples to one already kept. Equal heights are
    resolved in favour of the earlier peak."""
    peaks = np.asarray(peaks, dtype=np.intp)
    if peaks.size == 0 or min_distance <= 1:
        return peaks
    heights = np.asarray(heights, dtype=np.float64)
    order = np.lexsort((peaks, -heights))
    keep = np.zeros(peaks.size, dtype=bool)
    sorted_kept = np.zeros(0, dtype=np.intp)
    for j in order:
        p = peaks[j]
        k = np.searchsorted(sorted_kept, p)
        near = ((k < sorted_kept.size and sorted_kept[k] - p < min_distance)
                or (k > 0 and p - sorted_kept[k - 1] < min_distance))
        if not near:
            keep[j] = True
            sorted_kept = np.insert(sorted_kept, k, p)
    return peaks[keep]


def find_puff_peaks(probs, lambda_p: float = 0.8, min_distance: int = 10,
                    threshold_first: bool = False) -> np.ndarray:
    """Indices of detected puffs in a probability vector, ascending.

    Default order: local maxima, distance suppression, then thresholding.
    ``threshold_first`` applies the threshold before distance suppression.
    """
    probs = np.asarray(probs, dtype=np.float64)
    peaks = local_maxima(probs)
    if threshold_first:
        peaks = peaks[probs[peaks] >= lambda_p]
        peaks = select_by_distance(peaks, probs[peaks], min_distance)
    else:
        peaks = select_by_distance(peaks, probs[peaks], min_distance)
        peaks = peaks[probs[peaks] >= lambda_p]
    return np.sort(peaks)


def detect_puffs(trace: ProbabilityTrace, lambda_p: float = 0.8, min_distance: int = 10,
                 threshold_first: bool = False) -> PuffSet:
    """Puff timestamps: surviving peaks of the trace, as window right edges.

    ``min_distance`` counts trace samples (one per window step).
    """
    idx = find_puff_peaks(trace.probs, lambda_p, min_distance, threshold_first)
    return PuffSet(np.asarray(trace.end_epochs, dtype=np.float64)[idx])
