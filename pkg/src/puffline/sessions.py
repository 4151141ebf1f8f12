"""Smoking-session localization: DBSCAN over detected puff timestamps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NOISE = -1


@dataclass(frozen=True)
class SessionSet:
    intervals: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        prev_end = -np.inf
        for start, end in self.intervals:
            if start > end:
                raise ValueError(f"session [{start}, {end}] ends before it starts")
            if start <= prev_end:
                raise ValueError("sessions must be sorted and non-overlapping")
            prev_end = end

    def __len__(self):
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)


def dbscan_1d(points, eps: float = 250.0, min_pts: int = 4) -> tuple[list[list[int]], list[int]]:
    """DBSCAN on sorted real values.

    A point is core when at least ``min_pts`` points (itself included) lie
    within ``eps``. Clusters are the connected groups of cores plus the
    non-core points within ``eps`` of one of their cores. Clusters are
    numbered by their earliest core; a border point reachable from several
    clusters joins the lowest-numbered one, which is what a classic DBSCAN
    scan in ascending order produces.

    Returns the clusters as lists of point indices and the noise indices.
    """
    x = np.asarray(points, dtype=np.float64)
    n = x.size
    if n and np.any(np.diff(x) < 0):
        raise ValueError("points must be sorted ascending")
    if n == 0:
        return [], []
    lo = np.searchsorted(x, x - eps, side="left")
    hi = np.searchsorted(x, x + eps, side="right")
    core = (hi - lo) >= min_pts

    labels = np.full(n, NOISE)
    core_idx = np.flatnonzero(core)
    if core_idx.size:
        # on the line, cores chain into one cluster while consecutive gaps stay within eps
        breaks = np.diff(x[core_idx]) > eps
        cluster_of_core = np.concatenate(([0], np.cumsum(breaks)))
        labels[core_idx] = cluster_of_core
        for i in np.flatnonzero(~core):
            # nearest cores on either side; the left one belongs to the earlier cluster
            k = np.searchsorted(core_idx, i)
            if k > 0 and x[i] - x[core_idx[k - 1]] <= eps:
                labels[i] = cluster_of_core[k - 1]
            elif k < core_idx.size and x[core_idx[k]] - x[i] <= eps:
                labels[i] = cluster_of_core[k]
    n_clusters = labels.max() + 1
    clusters = [np.flatnonzero(labels == c).tolist() for c in range(n_clusters)]
    return clusters, np.flatnonzero(labels == NOISE).tolist()


def localize_sessions(puffs, eps: float = 250.0, min_pts: int = 4) -> SessionSet:
    """Sessions spanning the first to last puff of every DBSCAN cluster."""
    t = np.sort(np.asarray(getattr(puffs, "timestamps", puffs), dtype=np.float64))
    clusters, _ = dbscan_1d(t, eps, min_pts)
    intervals = sorted((float(t[c].min()), float(t[c].max())) for c in clusters)
    return SessionSet(intervals)
