"""Dense float32 tensor substrate.

Tensors in this engine are plain ``numpy.ndarray`` values: row-major
(C-contiguous), 32-bit float, with numpy itself guaranteeing that the
flat data length equals the product of the shape. The functions here add
the shape checking, the fixed accumulation order, and the seeded random
generator that the rest of the engine builds on.

All operations are pure: the same inputs produce bit-identical outputs,
and nothing mutates its arguments. ``Rng`` is the one stateful object and
is single-owner by contract.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import _kernels
from .errors import IndexRangeError, ShapeError

DTYPE = np.dtype(np.float32)


def tensor(data, shape: Sequence[int] | None = None) -> np.ndarray:
    """Build a float32 row-major tensor from nested lists or an array."""
    out = np.ascontiguousarray(data, dtype=DTYPE)
    if shape is not None:
        out = out.reshape(tuple(shape))
    return out


def check_tensor(x: np.ndarray, ndim: int | None = None, what: str = "tensor") -> np.ndarray:
    """Validate dtype/contiguity, optionally rank. Returns the array."""
    if not isinstance(x, np.ndarray) or x.dtype != DTYPE:
        raise ShapeError(f"{what} must be a float32 ndarray, got {type(x).__name__}"
                         f"{'' if not isinstance(x, np.ndarray) else f' of dtype {x.dtype}'}")
    if ndim is not None and x.ndim != ndim:
        raise ShapeError(f"{what} must have rank {ndim}, got shape {x.shape}")
    if not x.flags.c_contiguous:
        raise ShapeError(f"{what} must be C-contiguous")
    return x


def require_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.isfinite(x).all():
        raise ShapeError(f"{what} contains non-finite values")
    return x


def _matmul_into(a: np.ndarray, b: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Validated matmul into a caller-provided buffer (internal)."""
    a = check_tensor(a, 2, "matmul lhs")
    b = check_tensor(b, 2, "matmul rhs")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    _kernels.matmul_into(a, b, out)
    return out


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with fixed left-to-right accumulation per element.

    The inner dimension is summed in index order with every multiply and
    add rounded to float32, so the result is bit-reproducible and equal
    to a naive triple-loop evaluation.
    """
    a = check_tensor(a, 2, "matmul lhs")
    b = check_tensor(b, 2, "matmul rhs")
    out = np.empty((a.shape[0], b.shape[1]), DTYPE)
    return _matmul_into(a, b, out)


def gather_rows(x: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """out[i][j] = x[idx[i][j]] for a row matrix x and an index matrix idx."""
    x = check_tensor(x, 2, "gather source")
    idx = np.asarray(idx)
    if idx.ndim != 2 or not np.issubdtype(idx.dtype, np.integer):
        raise ShapeError(f"gather index matrix must be 2-D integer, got {idx.dtype} of shape {idx.shape}")
    n = x.shape[0]
    bad = (idx < 0) | (idx >= n)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise IndexRangeError(
            f"gather index out of range at ({i}, {j}): {idx[i, j]} not in [0, {n})")
    return x[idx]


def reduce_max_axis(x: np.ndarray, axis: int) -> np.ndarray:
    """Channel-wise maximum along ``axis``; the axis is dropped.

    Max is exact, so any evaluation order gives identical bits; the
    (n, k, c)-over-k case is the engine's hot path and runs in a kernel.
    """
    x = check_tensor(x, None, "reduce input")
    if not 0 <= axis < x.ndim:
        raise ShapeError(f"axis {axis} invalid for shape {x.shape}")
    if x.shape[axis] < 1:
        raise ShapeError(f"cannot reduce over empty axis {axis}: no elements to aggregate")
    if x.ndim == 3 and axis == 1:
        out = np.empty((x.shape[0], x.shape[2]), DTYPE)
        _kernels.reduce_max_mid_into(x, out)
        return out
    return np.max(x, axis=axis)


class Rng:
    """Seeded deterministic generator (PCG64 underneath).

    Identical seeds yield identical draw sequences across runs and
    platforms. Consumers document their draw order; golden-value tests
    pin the stream so an accidental generator change is caught.
    """

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self._gen = np.random.Generator(np.random.PCG64(seed))

    def uniform(self, low: float, high: float, shape: Sequence[int] | int) -> np.ndarray:
        """Uniform float32 draws in [low, high)."""
        return self._gen.uniform(low, high, shape).astype(DTYPE)
