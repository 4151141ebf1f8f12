"""Independent reference implementations shared by the unit and acceptance tests."""

from collections import deque

import numpy as np


def dft_oracle(c, f, fs):
    # plain sum, written independently of FirFilter.response
    return abs(sum(c[k] * np.exp(-2j * np.pi * f * k / fs) for k in range(len(c))))


def oracle_peaks(x, lambda_p=0.8, min_distance=10):
    """Brute force: scan every index, find its plateau, check both sides."""
    x = list(x)
    n = len(x)
    maxima = []
    for i in range(n):
        if i > 0 and x[i - 1] == x[i]:
            continue  # not the first index of its run
        j = i
        while j + 1 < n and x[j + 1] == x[i]:
            j += 1
        left_ok = i == 0 or x[i - 1] < x[i]
        right_ok = j == n - 1 or x[j + 1] < x[i]
        if left_ok and right_ok:
            maxima.append(i)
    kept = []
    for i in sorted(maxima, key=lambda k: (-x[k], k)):
        if all(abs(i - k) >= min_distance for k in kept):
            kept.append(i)
    return sorted(i for i in kept if x[i] >= lambda_p)


def random_trace(rng, n):
    kind = rng.integers(4)
    if kind == 0:
        return rng.random(n)
    if kind == 1:
        # coarse values make plateaus and ties frequent
        return rng.integers(0, 6, n) / 5.0
    if kind == 2:
        # smooth bumps like a real probability trace
        x = np.convolve(rng.random(n + 8), np.ones(9) / 9, mode="valid")[:n]
        return np.round(x, 2)
    return np.repeat(rng.random(max(1, n // 4 + 1)), 4)[:n]


def oracle_dbscan(x, eps, min_pts):
    """Textbook DBSCAN: O(n^2) neighbourhoods, queue expansion, ascending scan."""
    n = len(x)
    nbrs = [[j for j in range(n) if abs(x[i] - x[j]) <= eps] for i in range(n)]
    core = [len(nb) >= min_pts for nb in nbrs]
    label = [None] * n
    clusters = []
    for i in range(n):
        if label[i] is not None or not core[i]:
            continue
        cid = len(clusters)
        members = {i}
        label[i] = cid
        queue = deque([i])
        while queue:
            p = queue.popleft()
            if not core[p]:
                continue
            for q in nbrs[p]:
                if label[q] is None:
                    label[q] = cid
                    members.add(q)
                    queue.append(q)
        clusters.append(sorted(members))
    noise = [i for i in range(n) if label[i] is None]
    return clusters, noise


def closure_partition(x, eps, min_pts):
    """Core components by transitive closure of the core adjacency matrix."""
    n = len(x)
    if n == 0:
        return []
    d = np.abs(np.subtract.outer(x, x)) <= eps
    core = d.sum(axis=1) >= min_pts
    reach = d & core[:, None] & core[None, :]
    reach |= np.eye(n, dtype=bool) & core[:, None]
    for k in range(n):
        reach |= reach[:, k:k + 1] & reach[k:k + 1, :]
    comps = {tuple(np.flatnonzero(reach[i])) for i in range(n) if core[i]}
    return sorted(comps)


def replay_points(points, gt):
    """Classify each point in time order by scanning every interval."""
    taken = [False] * len(gt)
    tp = fp = 0
    for p in sorted(points):
        owner = None
        for j, (s, e) in enumerate(gt):
            if s <= p <= e:
                owner = j
                break  # earliest interval wins a shared boundary
        if owner is None or taken[owner]:
            fp += 1
        else:
            taken[owner] = True
            tp += 1
    return tp, fp, taken.count(False)


def random_intervals(rng, k, span=1000.0):
    cuts = np.sort(rng.choice(np.arange(0, span, 0.5), size=2 * k, replace=False))
    iv = cuts.reshape(-1, 2).tolist()
    if k > 1 and rng.random() < 0.3:
        iv[1][0] = iv[0][1]  # abutting intervals share a boundary
    return [tuple(x) for x in iv]
