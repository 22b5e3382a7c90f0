"""Pure-numpy geometry kernels (fallback backend).

Same contracts as the compiled backend in _native.pyx: deterministic,
lowest-index tie-breaking via first-occurrence argmin/argmax.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"

# Row block size for pairwise scans; bounds temporary matrices to a few MB.
_BLOCK = 512


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances [len(a), len(b)] via the inner-product expansion."""
    d = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :]
    d -= 2.0 * (a @ b.T)
    return d


def nearest_neighbors(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For each row of a, the index of its nearest row in b, plus both-direction mins.

    Returns (idx_ab [N], idx_ba [M]): nearest index in b for each a-point and
    nearest index in a for each b-point, computed in one sweep.
    """
    n, m = a.shape[0], b.shape[0]
    idx_ab = np.empty(n, dtype=np.int64)
    best_ba = np.full(m, np.inf)
    idx_ba = np.zeros(m, dtype=np.int64)
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        d = _sq_dists(a[start:stop], b)
        idx_ab[start:stop] = np.argmin(d, axis=1)
        col_min_idx = np.argmin(d, axis=0)
        col_min = d[col_min_idx, np.arange(m)]
        better = col_min < best_ba
        best_ba[better] = col_min[better]
        idx_ba[better] = col_min_idx[better] + start
    return idx_ab, idx_ba


def farthest_point_sample(points: np.ndarray, count: int) -> np.ndarray:
    """Greedy max-min subset selection, seeded at index 0.

    Already-selected points are masked to -1 so the result is always a set of
    distinct indices, even on clouds with duplicated points.
    """
    n = points.shape[0]
    selected = np.empty(count, dtype=np.int64)
    selected[0] = 0
    dist = ((points - points[0]) ** 2).sum(axis=1)
    dist[0] = -1.0
    for i in range(1, count):
        nxt = int(np.argmax(dist))
        selected[i] = nxt
        d = ((points - points[nxt]) ** 2).sum(axis=1)
        np.minimum(dist, d, out=dist)
        dist[nxt] = -1.0
    return selected


def ball_query(query: np.ndarray, source: np.ndarray, radius: float,
               max_samples: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices of source points strictly inside `radius` of each query point.

    Per query row: up to max_samples qualifying indices in ascending source
    order; the first qualifying index pads unused slots. Rows with no
    qualifier get the globally nearest source index in every slot and a
    valid count of 0.
    """
    nq, ns = query.shape[0], source.shape[0]
    r2 = radius * radius
    indices = np.empty((nq, max_samples), dtype=np.int64)
    counts = np.empty(nq, dtype=np.int64)
    cols = np.arange(ns, dtype=np.int64)
    for start in range(0, nq, _BLOCK):
        stop = min(start + _BLOCK, nq)
        d = _sq_dists(query[start:stop], source)
        inside = d < r2
        # sentinel ns sorts after every real index -> ascending qualifiers first
        cand = np.where(inside, cols[None, :], ns)
        cand.sort(axis=1)
        if cand.shape[1] < max_samples:
            pad = np.full((cand.shape[0], max_samples - cand.shape[1]), ns, dtype=np.int64)
            cand = np.concatenate([cand, pad], axis=1)
        take = cand[:, :max_samples]
        cnt = np.minimum(inside.sum(axis=1), max_samples)
        nearest = np.argmin(d, axis=1)
        fill = np.where(cnt > 0, take[:, 0], nearest)
        indices[start:stop] = np.where(take < ns, take, fill[:, None])
        counts[start:stop] = cnt
    return indices, counts
