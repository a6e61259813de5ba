"""Numba kernels behind the dense-math hot paths.

Every kernel accumulates strictly left-to-right per output element in
float32, so results are bit-reproducible run to run and match the pure
Python loop oracles used in the tests. The parallel variants distribute
whole output rows across threads; per-element accumulation order is
unchanged, so they are bit-identical to the serial variants.

Thread mode is process-global and single-owner: benchmarks set it before
a run and restore it afterwards. Default is single-threaded.
"""

from __future__ import annotations

import warnings

import numpy as np

with warnings.catch_warnings():
    # TBB version probing on import is noise we cannot act on.
    warnings.simplefilter("ignore")
    from numba import njit, prange

_THREAD_MODES = ("single", "parallel")
_thread_mode = "single"


def set_thread_mode(mode: str) -> None:
    global _thread_mode
    if mode not in _THREAD_MODES:
        raise ValueError(f"thread mode must be one of {_THREAD_MODES}, got {mode!r}")
    _thread_mode = mode


def get_thread_mode() -> str:
    return _thread_mode


def _matmul_body(a, b, out):
    m, p = a.shape
    q = b.shape[1]
    for i in prange(m):
        for j in range(q):
            out[i, j] = np.float32(0.0)
        for kk in range(p):
            aik = a[i, kk]
            for j in range(q):
                out[i, j] += aik * b[kk, j]


def _matmul_blocked_body(a, b, out):
    # Rows processed in blocks of 8 so each b row is reused from cache;
    # every output element still accumulates its k-terms in ascending
    # order, so results are bit-identical to the row-at-a-time kernel.
    m, p = a.shape
    q = b.shape[1]
    nblocks = (m + 7) // 8
    for blk in prange(nblocks):
        ib = blk * 8
        hi = min(ib + 8, m)
        for i in range(ib, hi):
            for j in range(q):
                out[i, j] = np.float32(0.0)
        for kk in range(p):
            for i in range(ib, hi):
                aik = a[i, kk]
                for j in range(q):
                    out[i, j] += aik * b[kk, j]


def _pairdist_body(xt, out):
    # xt is the transposed point matrix (c, n); transposing is exact data
    # movement and gives the inner loop contiguous access.
    c, n = xt.shape
    for i in prange(n):
        for j in range(n):
            out[i, j] = np.float32(0.0)
        for d in range(c):
            xid = xt[d, i]
            row = xt[d]
            for j in range(n):
                diff = xid - row[j]
                out[i, j] += diff * diff


def _edge_features_body(x, idx, out):
    # out[i, j] = (x[i] || x[idx[i, j]] - x[i]); single pass, same
    # float32 subtractions the separate gather/subtract path performs.
    n, c = x.shape
    k = idx.shape[1]
    for i in prange(n):
        for j in range(k):
            nb = idx[i, j]
            for d in range(c):
                xi = x[i, d]
                out[i, j, d] = xi
                out[i, j, c + d] = x[nb, d] - xi


def _bias_bn_relu_body(h, bias, has_bn, mean, scale, beta, has_relu):
    # In-place v = relu(((v + bias) - mean) * scale + beta); each step
    # rounds to float32 exactly like the separate numpy passes.
    rows, cols = h.shape
    for i in prange(rows):
        for j in range(cols):
            v = h[i, j] + bias[j]
            if has_bn:
                v = (v - mean[j]) * scale[j] + beta[j]
            if has_relu and v < np.float32(0.0):
                v = np.float32(0.0)
            h[i, j] = v


def _reduce_max_mid_body(x, out):
    # max over the middle axis of an (n, k, c) tensor; max is exact, so
    # the scan order cannot change the result.
    n, k, c = x.shape
    for i in prange(n):
        for d in range(c):
            out[i, d] = x[i, 0, d]
        for j in range(1, k):
            for d in range(c):
                v = x[i, j, d]
                if v > out[i, d]:
                    out[i, d] = v


def _knn_select_body(dist, k, out_idx):
    # Bounded insertion selection: per row, keep the k best (distance,
    # index) pairs in a sorted scratch array. Candidates are scanned in
    # ascending index order and displaced only by strictly smaller
    # distances, which yields ascending-distance rows with ties broken by
    # ascending node index. O(n*k) per row, never a full row sort.
    n = dist.shape[0]
    for i in prange(n):
        best_d = np.empty(k, np.float32)
        best_j = np.empty(k, np.int64)
        cnt = 0
        drow = dist[i]
        for j in range(n):
            if j == i:
                continue
            dj = drow[j]
            if cnt == k and dj >= best_d[k - 1]:
                continue
            hi = cnt if cnt < k else k - 1
            pos = hi
            while pos > 0 and dj < best_d[pos - 1]:
                pos -= 1
            for m in range(hi, pos, -1):
                best_d[m] = best_d[m - 1]
                best_j[m] = best_j[m - 1]
            best_d[pos] = dj
            best_j[pos] = j
            if cnt < k:
                cnt += 1
        for m in range(k):
            out_idx[i, m] = best_j[m]


_matmul_serial = njit(cache=True)(_matmul_body)
_matmul_parallel = njit(cache=True, parallel=True)(_matmul_body)
_matmul_blocked_serial = njit(cache=True)(_matmul_blocked_body)
_matmul_blocked_parallel = njit(cache=True, parallel=True)(_matmul_blocked_body)
_pairdist_serial = njit(cache=True)(_pairdist_body)
_pairdist_parallel = njit(cache=True, parallel=True)(_pairdist_body)
_edge_features_serial = njit(cache=True)(_edge_features_body)
_edge_features_parallel = njit(cache=True, parallel=True)(_edge_features_body)
_bias_bn_relu_serial = njit(cache=True)(_bias_bn_relu_body)
_bias_bn_relu_parallel = njit(cache=True, parallel=True)(_bias_bn_relu_body)
_reduce_max_mid_serial = njit(cache=True)(_reduce_max_mid_body)
_reduce_max_mid_parallel = njit(cache=True, parallel=True)(_reduce_max_mid_body)
_knn_select_serial = njit(cache=True)(_knn_select_body)
_knn_select_parallel = njit(cache=True, parallel=True)(_knn_select_body)

# Row blocking only pays off once output rows stop fitting in registers.
_BLOCKED_MIN_COLS = 256


def matmul_into(a: np.ndarray, b: np.ndarray, out: np.ndarray) -> None:
    if b.shape[1] >= _BLOCKED_MIN_COLS:
        if _thread_mode == "parallel":
            _matmul_blocked_parallel(a, b, out)
        else:
            _matmul_blocked_serial(a, b, out)
    elif _thread_mode == "parallel":
        _matmul_parallel(a, b, out)
    else:
        _matmul_serial(a, b, out)


def edge_features_into(x: np.ndarray, idx: np.ndarray, out: np.ndarray) -> None:
    if _thread_mode == "parallel":
        _edge_features_parallel(x, idx, out)
    else:
        _edge_features_serial(x, idx, out)


def bias_bn_relu_inplace(h: np.ndarray, bias: np.ndarray, mean, scale, beta,
                         relu: bool) -> None:
    has_bn = mean is not None
    if not has_bn:
        mean = scale = beta = bias  # placeholders, never read
    if _thread_mode == "parallel":
        _bias_bn_relu_parallel(h, bias, has_bn, mean, scale, beta, relu)
    else:
        _bias_bn_relu_serial(h, bias, has_bn, mean, scale, beta, relu)


def reduce_max_mid_into(x: np.ndarray, out: np.ndarray) -> None:
    if _thread_mode == "parallel":
        _reduce_max_mid_parallel(x, out)
    else:
        _reduce_max_mid_serial(x, out)


def pairdist_into(xt: np.ndarray, out: np.ndarray) -> None:
    if _thread_mode == "parallel":
        _pairdist_parallel(xt, out)
    else:
        _pairdist_serial(xt, out)


def knn_select_into(dist: np.ndarray, k: int, out_idx: np.ndarray) -> None:
    if _thread_mode == "parallel":
        _knn_select_parallel(dist, k, out_idx)
    else:
        _knn_select_serial(dist, k, out_idx)


def warm_kernels() -> None:
    """Trigger JIT compilation of all kernels on tiny inputs."""
    a = np.ones((2, 2), np.float32)
    out2 = np.empty((2, 2), np.float32)
    idx = np.zeros((2, 1), np.int64)
    edges = np.empty((2, 1, 4), np.float32)
    bias = np.zeros(2, np.float32)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for mm in (_matmul_serial, _matmul_parallel,
                   _matmul_blocked_serial, _matmul_blocked_parallel):
            mm(a, a, out2)
        for pd in (_pairdist_serial, _pairdist_parallel):
            pd(a, out2)
        for ef in (_edge_features_serial, _edge_features_parallel):
            ef(a, idx, edges)
        for bb in (_bias_bn_relu_serial, _bias_bn_relu_parallel):
            bb(out2.copy(), bias, True, bias, bias, bias, True)
            bb(out2.copy(), bias, False, bias, bias, bias, False)
        for rm in (_reduce_max_mid_serial, _reduce_max_mid_parallel):
            rm(edges, np.empty((2, 4), np.float32))
        for sel in (_knn_select_serial, _knn_select_parallel):
            sel(out2, 1, idx)
