"""Neural building blocks: shared MLP, edge features, EdgeConv, pooling.

Everything here is inference-mode only. BatchNorm uses running
statistics and can be folded into the preceding linear layer; dropout is
stored on the spec for the benefit of external trainers but is an
identity at inference.
"""

from __future__ import annotations

import threading
import weakref
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import ConfigError, GraphError, IndexRangeError
from .knn import KnnGraph, knn_graph
from .tensor import DTYPE, _matmul_into, check_tensor, reduce_max_axis

BN_EPSILON = 1e-5

# Contiguous transposes of weight matrices, keyed by the weight's identity
# and evicted when the weight is collected. Pure layout preparation: the
# cached array is exactly ascontiguousarray(w.T).
_transpose_cache: dict[int, tuple[weakref.ref, np.ndarray]] = {}


def _transposed(w: np.ndarray) -> np.ndarray:
    entry = _transpose_cache.get(id(w))
    if entry is not None and entry[0]() is w:
        return entry[1]
    wt = np.ascontiguousarray(w.T)
    key = id(w)
    # bind the dict: module globals may already be cleared when the last
    # weight reference dies at interpreter shutdown
    evict = lambda _, k=key, cache=_transpose_cache: cache.pop(k, None)  # noqa: E731
    _transpose_cache[key] = (weakref.ref(w, evict), wt)
    return wt


@dataclass(frozen=True)
class MlpSpec:
    """Shared-MLP layout: channel list plus per-layer batchnorm/ReLU flags.

    ``channels`` is (c_in, a_1, ..., a_m); flags have one entry per layer.
    ``dropout`` is the classifier-head dropout probability, an inference
    no-op kept for weight-producing trainers.
    """

    channels: tuple[int, ...]
    batchnorm: tuple[bool, ...]
    activation: tuple[bool, ...]
    dropout: float = 0.0

    def __post_init__(self):
        if len(self.channels) < 2:
            raise ConfigError(f"MLP needs at least one layer, got channels {self.channels}")
        if any(c < 1 for c in self.channels):
            raise ConfigError(f"MLP channels must be positive, got {self.channels}")
        m = self.n_layers
        if len(self.batchnorm) != m or len(self.activation) != m:
            raise ConfigError(
                f"per-layer flags must have {m} entries, got batchnorm={self.batchnorm}, "
                f"activation={self.activation}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def n_layers(self) -> int:
        return len(self.channels) - 1

    @property
    def c_in(self) -> int:
        return self.channels[0]

    @property
    def c_out(self) -> int:
        return self.channels[-1]


def single_layer_spec(c_in: int, c_out: int) -> MlpSpec:
    """One linear layer with batchnorm and ReLU (the EdgeConv update MLP)."""
    return MlpSpec(channels=(c_in, c_out), batchnorm=(True,), activation=(True,))


@dataclass(frozen=True)
class LinearParams:
    weight: np.ndarray  # (c_out, c_in)
    bias: np.ndarray    # (c_out,)


@dataclass(frozen=True)
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = BN_EPSILON


@dataclass(frozen=True)
class LayerParams:
    """Parameters for one MLP: one linear per layer, optional batchnorm."""

    linears: tuple[LinearParams, ...]
    batchnorms: tuple[BatchNormParams | None, ...]


def check_params(spec: MlpSpec, params: LayerParams) -> None:
    """Raise ConfigError unless params match spec layer by layer."""
    if len(params.linears) != spec.n_layers or len(params.batchnorms) != spec.n_layers:
        raise ConfigError(
            f"params hold {len(params.linears)} linears / {len(params.batchnorms)} batchnorms "
            f"for a {spec.n_layers}-layer spec")
    for li in range(spec.n_layers):
        c_in, c_out = spec.channels[li], spec.channels[li + 1]
        lin = params.linears[li]
        if lin.weight.shape != (c_out, c_in):
            raise ConfigError(
                f"layer {li} weight shape {lin.weight.shape} != ({c_out}, {c_in})")
        if lin.bias.shape != (c_out,):
            raise ConfigError(f"layer {li} bias shape {lin.bias.shape} != ({c_out},)")
        bn = params.batchnorms[li]
        if spec.batchnorm[li]:
            if bn is None:
                raise ConfigError(f"layer {li} expects batchnorm params")
            for name in ("gamma", "beta", "running_mean", "running_var"):
                arr = getattr(bn, name)
                if arr.shape != (c_out,):
                    raise ConfigError(f"layer {li} batchnorm {name} shape {arr.shape} != ({c_out},)")
            if not (bn.running_var > 0).all():
                raise ConfigError(f"layer {li} running_var must be strictly positive")
        elif bn is not None:
            raise ConfigError(f"layer {li} carries batchnorm params but spec disables batchnorm")


def mlp_forward(spec: MlpSpec, params: LayerParams, x: np.ndarray,
                _pooled: bool = False) -> np.ndarray:
    """Apply the shared MLP over the last axis of x.

    Leading axes are flattened and restored, so the same parameters are
    applied to every point/edge. Per layer: linear, then inference-mode
    batchnorm where flagged, then ReLU where flagged.

    ``_pooled`` is internal: callers that provably consume the result
    before their next engine call (edgeconv_update) let the activations
    live in the per-thread workspace instead of fresh allocations.
    """
    check_params(spec, params)
    x = check_tensor(x, None, "MLP input")
    if x.ndim < 1 or x.shape[-1] != spec.c_in:
        raise ConfigError(f"MLP input last dimension {x.shape} != c_in {spec.c_in}")
    lead = x.shape[:-1]
    h = np.ascontiguousarray(x.reshape(-1, spec.c_in))
    rows = h.shape[0]
    for li in range(spec.n_layers):
        lin = params.linears[li]
        c_out = spec.channels[li + 1]
        if _pooled:
            out = _take_buffer(f"mlp{li}", (rows, c_out))
        else:
            out = np.empty((rows, c_out), DTYPE)
        h = _matmul_into(h, _transposed(lin.weight), out)
        bn = params.batchnorms[li]
        if bn is not None:
            scale = bn.gamma / np.sqrt(bn.running_var + np.float32(bn.epsilon))
            _kernels.bias_bn_relu_inplace(h, lin.bias, bn.running_mean, scale,
                                          bn.beta, spec.activation[li])
        else:
            _kernels.bias_bn_relu_inplace(h, lin.bias, None, None, None,
                                          spec.activation[li])
    return h.reshape(*lead, spec.c_out)


def fold_batchnorm(spec: MlpSpec, params: LayerParams) -> tuple[MlpSpec, LayerParams]:
    """Fold every batchnorm into its linear layer; returns (spec', params')."""
    check_params(spec, params)
    linears: list[LinearParams] = []
    for li in range(spec.n_layers):
        lin = params.linears[li]
        bn = params.batchnorms[li]
        if bn is None:
            linears.append(lin)
            continue
        scale = bn.gamma / np.sqrt(bn.running_var + np.float32(bn.epsilon))
        weight = np.ascontiguousarray(lin.weight * scale[:, None])
        bias = (lin.bias - bn.running_mean) * scale + bn.beta
        linears.append(LinearParams(weight=weight, bias=bias))
    folded_spec = replace(spec, batchnorm=(False,) * spec.n_layers)
    folded = LayerParams(linears=tuple(linears), batchnorms=(None,) * spec.n_layers)
    return folded_spec, folded


def _fill_edge_features(x: np.ndarray, g: KnnGraph, out: np.ndarray) -> None:
    n = x.shape[0]
    if g.n != n:
        raise GraphError(f"graph built over {g.n} nodes, features have {n} rows")
    idx = g.neighbors
    bad = (idx < 0) | (idx >= n)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise IndexRangeError(
            f"gather index out of range at ({i}, {j}): {idx[i, j]} not in [0, {n})")
    _kernels.edge_features_into(x, np.ascontiguousarray(idx), out)


def edge_features(x: np.ndarray, g: KnnGraph) -> np.ndarray:
    """Per-edge features: center features next to neighbor offsets.

    out[i][j] = concat(x[i], x[g.neighbors[i][j]] - x[i]), shape n x k x 2c.
    """
    x = check_tensor(x, 2, "node features")
    n, c = x.shape
    out = np.empty((n, g.k, 2 * c), DTYPE)
    _fill_edge_features(x, g, out)
    return out


# Per-thread reusable workspace buffers, keyed by (tag, shape). Pooled
# buffers never escape the call that takes them (contents are consumed
# before return), so reuse changes no observable value; it keeps the
# large-buffer addresses identical from forward to forward and across
# static-tail variants, which would otherwise wobble with the allocator
# history and show up as cache-aliasing noise in latency measurements.
_workspace = threading.local()


def _take_buffer(tag: str, shape: tuple[int, ...]) -> np.ndarray:
    buffers = getattr(_workspace, "buffers", None)
    if buffers is None:
        buffers = _workspace.buffers = {}
    key = (tag, shape)
    buf = buffers.get(key)
    if buf is None:
        if len(buffers) >= 16:
            buffers.clear()
        buf = buffers[key] = np.empty(shape, DTYPE)
    return buf


def edgeconv_update(x: np.ndarray, g: KnnGraph, spec: MlpSpec, params: LayerParams) -> np.ndarray:
    """EdgeConv feature update: shared MLP over edges, channel-wise max."""
    x = check_tensor(x, 2, "node features")
    c = x.shape[-1]
    if spec.c_in != 2 * c:
        raise ConfigError(f"EdgeConv MLP expects c_in == 2c ({2 * c}), spec has {spec.c_in}")
    e = _take_buffer("edge", (x.shape[0], g.k, 2 * c))
    _fill_edge_features(x, g, e)
    h = mlp_forward(spec, params, e, _pooled=True)
    return reduce_max_axis(h, 1)


def dynamic_edgeconv(x: np.ndarray, k: int, spec: MlpSpec,
                     params: LayerParams) -> tuple[np.ndarray, KnnGraph]:
    """Graph rebuild over the current embeddings, then EdgeConv update.

    Returns the updated features and the constructed graph; the graph is
    what static trailing layers reuse.
    """
    g = knn_graph(x, k)
    return edgeconv_update(x, g, spec, params), g


def pointnet_update(x: np.ndarray, spec: MlpSpec, params: LayerParams) -> np.ndarray:
    """Per-point shared MLP baseline: no graph, no aggregation."""
    check_tensor(x, 2, "node features")
    return mlp_forward(spec, params, x)


def global_max_pool(x: np.ndarray) -> np.ndarray:
    """Channel-wise max over all points: n x c -> c."""
    x = check_tensor(x, 2, "pool input")
    return reduce_max_axis(x, 0)


def log_softmax(x: np.ndarray) -> np.ndarray:
    """x - logsumexp(x), computed with max subtraction for stability."""
    x = check_tensor(x, 1, "logits")
    shifted = x - np.max(x)
    lse = np.log(np.sum(np.exp(shifted), dtype=DTYPE))
    return shifted - lse
