"""Independent brute-force oracles shared by the unit and acceptance suites.

These deliberately avoid the library's own kernels: plain loops and direct
formula transcriptions, kept simple enough to audit by eye.
"""

import numpy as np


def matmul_oracle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Naive triple-loop contraction for 2-D operands."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for l in range(k):
                out[i, j] += a[i, l] * b[l, j]
    return out


def fps_oracle(points: np.ndarray, count: int) -> np.ndarray:
    """Greedy max-min selection by exhaustive recomputation each step."""
    chosen = [0]
    for _ in range(count - 1):
        best_idx, best_val = None, -np.inf
        for j in range(points.shape[0]):
            if j in chosen:
                continue
            min_d = min(((points[j] - points[c]) ** 2).sum() for c in chosen)
            if min_d > best_val:
                best_val, best_idx = min_d, j
        chosen.append(best_idx)
    return np.asarray(chosen, dtype=np.int64)


def ball_query_oracle(query, source, radius, s):
    """Per-query exhaustive scan with the padding rules spelled out."""
    nq, ns = query.shape[0], source.shape[0]
    idx = np.zeros((nq, s), dtype=np.int64)
    counts = np.zeros(nq, dtype=np.int64)
    for i in range(nq):
        inside = [j for j in range(ns)
                  if ((query[i] - source[j]) ** 2).sum() < radius * radius]
        if inside:
            kept = inside[:s]
            counts[i] = len(kept)
            row = kept + [kept[0]] * (s - len(kept))
        else:
            dists = [((query[i] - source[j]) ** 2).sum() for j in range(ns)]
            row = [int(np.argmin(dists))] * s
        idx[i] = row
    return idx, counts


def chamfer_oracle(a: np.ndarray, b: np.ndarray, squared: bool) -> float:
    """Double loop over both clouds."""
    def side(x, y):
        total = 0.0
        for p in x:
            best = min(((p - q) ** 2).sum() for q in y)
            total += best if squared else np.sqrt(best)
        return total / x.shape[0]

    return side(a, b) + side(b, a)


def vanilla_attention_oracle(f, wq, wk, wv, heads):
    """Direct evaluation: per-head Q KT / sqrt(d), row softmax, times V."""
    n = f.shape[0]
    q, k, v = f @ wq, f @ wk, f @ wv
    d = q.shape[1] // heads
    out = np.zeros((n, q.shape[1]))
    for h in range(heads):
        sl = slice(h * d, (h + 1) * d)
        scores = q[:, sl] @ k[:, sl].T / np.sqrt(d)
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        a = e / e.sum(axis=1, keepdims=True)
        out[:, sl] = a @ v[:, sl]
    return out


def local_attention_oracle(qf, gf, wq, wk, wv, heads):
    """Direct evaluation of per-row neighborhood attention."""
    n, s, _ = gf.shape
    q = qf @ wq
    c = q.shape[1]
    d = c // heads
    out = np.zeros((n, c))
    for i in range(n):
        k = gf[i] @ wk
        v = gf[i] @ wv
        for h in range(heads):
            sl = slice(h * d, (h + 1) * d)
            scores = (k[:, sl] @ q[i, sl]) / np.sqrt(d)
            e = np.exp(scores - scores.max())
            a = e / e.sum()
            out[i, sl] = a @ v[:, sl]
    return out
