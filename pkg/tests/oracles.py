"""Independent reference implementations the tests check the engine against.

Everything here is deliberately written as plain loops (or loop-ordered
numpy) so it shares no code with the engine's kernels.
"""

import numpy as np


def matmul_oracle(a, b):
    """Naive triple loop, every multiply and add rounded to float32."""
    m, p = a.shape
    q = b.shape[1]
    out = np.zeros((m, q), np.float32)
    for i in range(m):
        for j in range(q):
            acc = np.float32(0.0)
            for kk in range(p):
                acc = np.float32(acc + np.float32(a[i, kk] * b[kk, j]))
            out[i, j] = acc
    return out


def gather_oracle(x, idx):
    out = np.empty((idx.shape[0], idx.shape[1], x.shape[1]), np.float32)
    for i in range(idx.shape[0]):
        for j in range(idx.shape[1]):
            out[i, j] = x[idx[i, j]]
    return out


def reduce_max_oracle(x, axis):
    moved = np.moveaxis(x, axis, 0)
    out = moved[0].copy()
    for s in range(1, moved.shape[0]):
        out = np.maximum(out, moved[s])
    return out


def sq_dist_oracle(x):
    """Per-pair double loop, float32 rounding at every step."""
    n, c = x.shape
    out = np.zeros((n, n), np.float32)
    for i in range(n):
        for j in range(n):
            acc = np.float32(0.0)
            for d in range(c):
                diff = np.float32(x[i, d] - x[j, d])
                acc = np.float32(acc + np.float32(diff * diff))
            out[i, j] = acc
    return out


def sq_dist_oracle_fast(x):
    """Vectorized variant with the same per-element accumulation order."""
    n, c = x.shape
    out = np.zeros((n, n), np.float32)
    for d in range(c):
        diff = x[:, d][:, None] - x[:, d][None, :]
        out += diff * diff
    return out


def knn_oracle(x, k):
    """Full sort of every row with the engine's tie rule (distance, then index)."""
    dist = sq_dist_oracle_fast(x)
    n = x.shape[0]
    out = np.empty((n, k), np.int64)
    for i in range(n):
        cand = np.array([j for j in range(n) if j != i])
        order = np.lexsort((cand, dist[i, cand]))
        out[i] = cand[order[:k]]
    return out
