"""Classifier network assembly: config, weights, traced forward execution.

The network is four successive EdgeConv layers over a point cloud, their
outputs concatenated and lifted to a global embedding, max-pooled, and
classified by a small MLP head ending in log-softmax. ``static_tail``
converts the trailing EdgeConv layers from dynamic (rebuild the kNN graph
over current embeddings) to static (reuse the last constructed graph),
which removes whole graph-construction stages from the forward pass.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Iterator, Mapping

import numpy as np

from .errors import ConfigError, GraphError
from .formats import PointCloud
from .knn import KnnGraph, knn_bytes, knn_graph
from .layers import (LayerParams, LinearParams, BatchNormParams, MlpSpec,
                     edgeconv_update, global_max_pool, log_softmax, mlp_forward,
                     single_layer_spec)
from .tensor import Rng

CONCAT_DIM = 320


@dataclass(frozen=True)
class ModelConfig:
    """Architecture description, including the qDGNN static-tail count."""

    k: int = 20
    num_points: int = 1024
    in_dim: int = 3
    dec_channels: tuple[int, ...] = (64, 64, 64, 128)
    embed_dim: int = 1024
    head_channels: tuple[int, ...] = (512, 256)
    num_classes: int = 40
    static_tail: int = 0
    dropout: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "dec_channels", tuple(self.dec_channels))
        object.__setattr__(self, "head_channels", tuple(self.head_channels))
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.num_points <= self.k:
            raise ConfigError(f"num_points must exceed k ({self.k}), got {self.num_points}")
        if self.in_dim < 1:
            raise ConfigError(f"in_dim must be positive, got {self.in_dim}")
        if len(self.dec_channels) != 4 or any(c < 1 for c in self.dec_channels):
            raise ConfigError(f"dec_channels must be four positive widths, got {self.dec_channels}")
        if sum(self.dec_channels) != CONCAT_DIM:
            raise ConfigError(
                f"dec_channels must sum to the concatenated width {CONCAT_DIM}, "
                f"got {self.dec_channels} (sum {sum(self.dec_channels)})")
        if not 0 <= self.static_tail < len(self.dec_channels):
            raise ConfigError(
                f"static_tail must be in [0, {len(self.dec_channels) - 1}] "
                f"(the first layer has no graph to reuse), got {self.static_tail}")
        if self.embed_dim < 1 or any(c < 1 for c in self.head_channels) or self.num_classes < 2:
            raise ConfigError("embed_dim/head_channels/num_classes must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def concat_dim(self) -> int:
        return sum(self.dec_channels)

    @property
    def n_edgeconv(self) -> int:
        return len(self.dec_channels)

    def dec_spec(self, i: int) -> MlpSpec:
        """Update-MLP spec of EdgeConv layer i (1-based)."""
        c_in = self.in_dim if i == 1 else self.dec_channels[i - 2]
        return single_layer_spec(2 * c_in, self.dec_channels[i - 1])

    def embed_spec(self) -> MlpSpec:
        return MlpSpec(channels=(self.concat_dim, self.embed_dim),
                       batchnorm=(True,), activation=(True,))

    def head_spec(self) -> MlpSpec:
        channels = (self.embed_dim, *self.head_channels, self.num_classes)
        m = len(channels) - 1
        return MlpSpec(channels=channels, batchnorm=(False,) * m,
                       activation=(True,) * (m - 1) + (False,), dropout=self.dropout)

    def blocks(self) -> Iterator[tuple[str, MlpSpec]]:
        for i in range(1, self.n_edgeconv + 1):
            yield f"dec{i}", self.dec_spec(i)
        yield "embed", self.embed_spec()
        yield "head", self.head_spec()


def expected_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Canonical tensor-name -> shape map the WeightStore must satisfy."""
    shapes: dict[str, tuple[int, ...]] = {}
    for block, spec in cfg.blocks():
        for li in range(spec.n_layers):
            c_in, c_out = spec.channels[li], spec.channels[li + 1]
            shapes[f"{block}.linear{li}.weight"] = (c_out, c_in)
            shapes[f"{block}.linear{li}.bias"] = (c_out,)
            if spec.batchnorm[li]:
                for p in ("gamma", "beta", "running_mean", "running_var"):
                    shapes[f"{block}.bn{li}.{p}"] = (c_out,)
    return shapes


class WeightStore(Mapping[str, np.ndarray]):
    """Named tensor map holding every parameter of the network."""

    def __init__(self, tensors: Mapping[str, np.ndarray]):
        self._tensors = dict(tensors)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def validate(self, cfg: ModelConfig) -> None:
        """Exact name-set and shape agreement with the config, var > 0."""
        expected = expected_shapes(cfg)
        missing = sorted(set(expected) - set(self._tensors))
        extra = sorted(set(self._tensors) - set(expected))
        if missing or extra:
            raise ConfigError(f"weight store mismatch: missing {missing}, unexpected {extra}")
        for name, shape in expected.items():
            got = self._tensors[name]
            if tuple(got.shape) != shape:
                raise ConfigError(f"{name} has shape {tuple(got.shape)}, expected {shape}")
            if got.dtype != np.float32:
                raise ConfigError(f"{name} must be float32, got {got.dtype}")
        for name, arr in self._tensors.items():
            if name.endswith("running_var") and not (arr > 0).all():
                raise ConfigError(f"{name} must be strictly positive")


def block_params(cfg: ModelConfig, w: WeightStore, block: str, spec: MlpSpec) -> LayerParams:
    linears = []
    batchnorms = []
    for li in range(spec.n_layers):
        linears.append(LinearParams(weight=w[f"{block}.linear{li}.weight"],
                                    bias=w[f"{block}.linear{li}.bias"]))
        if spec.batchnorm[li]:
            batchnorms.append(BatchNormParams(
                gamma=w[f"{block}.bn{li}.gamma"],
                beta=w[f"{block}.bn{li}.beta"],
                running_mean=w[f"{block}.bn{li}.running_mean"],
                running_var=w[f"{block}.bn{li}.running_var"]))
        else:
            batchnorms.append(None)
    return LayerParams(linears=tuple(linears), batchnorms=tuple(batchnorms))


def random_weights(cfg: ModelConfig, rng: Rng) -> WeightStore:
    """Deterministic scaled-uniform initialization.

    Linear weights and biases draw from U(-1/sqrt(c_in), 1/sqrt(c_in))
    (fan-in bound), batchnorms start at identity (gamma 1, beta 0, mean 0,
    var 1). Draw order is the canonical block order, weight before bias.
    """
    tensors: dict[str, np.ndarray] = {}
    for block, spec in cfg.blocks():
        for li in range(spec.n_layers):
            c_in, c_out = spec.channels[li], spec.channels[li + 1]
            bound = 1.0 / float(np.sqrt(c_in))
            tensors[f"{block}.linear{li}.weight"] = rng.uniform(-bound, bound, (c_out, c_in))
            tensors[f"{block}.linear{li}.bias"] = rng.uniform(-bound, bound, (c_out,))
            if spec.batchnorm[li]:
                tensors[f"{block}.bn{li}.gamma"] = np.ones(c_out, np.float32)
                tensors[f"{block}.bn{li}.beta"] = np.zeros(c_out, np.float32)
                tensors[f"{block}.bn{li}.running_mean"] = np.zeros(c_out, np.float32)
                tensors[f"{block}.bn{li}.running_var"] = np.ones(c_out, np.float32)
    return WeightStore(tensors)


# --- analytic memory accounting -------------------------------------------

@dataclass(frozen=True)
class StagePlan:
    layer: str
    stage: str
    bytes_persistent: int
    bytes_transient: int


def stage_plan(cfg: ModelConfig, n: int) -> list[StagePlan]:
    """Per-stage byte accounting for one forward pass at n points.

    Model: the kNN operator owns its index matrix plus the gathered
    neighbor tensor (``knn_bytes``) and uses the n x n distance matrix as
    k-independent workspace; a feature update owns its n x a output and
    uses the edge tensor plus the pre-aggregation MLP output as workspace.
    Static layers have no graph row at all, so converting a layer from
    dynamic to static removes exactly that layer's kNN bytes.
    """
    plans: list[StagePlan] = []
    c = cfg.in_dim
    for i, a in enumerate(cfg.dec_channels, start=1):
        if i <= cfg.n_edgeconv - cfg.static_tail:
            plans.append(StagePlan(f"dec{i}", "graph_construction",
                                   knn_bytes(n, cfg.k, c), 4 * n * n))
        plans.append(StagePlan(f"dec{i}", "feature_update",
                               4 * n * a, 4 * n * cfg.k * 2 * c + 4 * n * cfg.k * a))
        c = a
    plans.append(StagePlan("concat", "concat", 4 * n * cfg.concat_dim, 0))
    plans.append(StagePlan("embed", "linear",
                           4 * n * cfg.embed_dim, 4 * n * cfg.embed_dim))
    plans.append(StagePlan("pool", "pool", 4 * cfg.embed_dim, 0))
    plans.append(StagePlan("head", "head",
                           4 * cfg.num_classes, 4 * sum(cfg.head_channels)))
    return plans


# --- traced forward --------------------------------------------------------

@dataclass(frozen=True)
class StageRecord:
    layer: str
    stage: str
    seconds: float
    bytes_persistent: int
    bytes_transient: int
    output_shape: tuple[int, ...]


@dataclass(frozen=True)
class ForwardTrace:
    """Per-stage timing/memory record of one forward pass."""

    records: tuple[StageRecord, ...]
    graphs: tuple[KnnGraph, ...]
    # For EdgeConv layer i (0-based), the index into ``graphs`` it used.
    graph_index_per_layer: tuple[int, ...]
    total_seconds: float

    def stage_records(self, stage: str) -> list[StageRecord]:
        return [r for r in self.records if r.stage == stage]

    def layer_seconds(self) -> dict[str, float]:
        """Layer latency, defined as the sum of its stage latencies."""
        totals: dict[str, float] = {}
        for r in self.records:
            totals[r.layer] = totals.get(r.layer, 0.0) + r.seconds
        return totals


def count_knn_invocations(trace: ForwardTrace) -> int:
    """Number of graph-construction stages executed in one forward."""
    return len(trace.stage_records("graph_construction"))


def forward(cfg: ModelConfig, w: WeightStore,
            cloud: PointCloud) -> tuple[np.ndarray, ForwardTrace]:
    """Run the classifier on one cloud; returns (log-probs, trace)."""
    feats = cloud.features
    n = feats.shape[0]
    if feats.shape[1] != cfg.in_dim:
        raise ConfigError(f"cloud features are {feats.shape[1]}-dimensional, "
                          f"config expects {cfg.in_dim}")
    if n <= cfg.k:
        raise GraphError(f"cloud has {n} points, need more than k={cfg.k}")
    w.validate(cfg)
    plan = {(p.layer, p.stage): p for p in stage_plan(cfg, n)}

    records: list[StageRecord] = []
    graphs: list[KnnGraph] = []
    graph_index: list[int] = []

    def record(layer: str, stage: str, seconds: float, shape: tuple[int, ...]) -> None:
        p = plan[(layer, stage)]
        records.append(StageRecord(layer, stage, seconds,
                                   p.bytes_persistent, p.bytes_transient, shape))

    t_start = time.perf_counter_ns()
    x = feats
    dec_outputs: list[np.ndarray] = []
    for i in range(1, cfg.n_edgeconv + 1):
        layer = f"dec{i}"
        spec = cfg.dec_spec(i)
        params = block_params(cfg, w, layer, spec)
        if i <= cfg.n_edgeconv - cfg.static_tail:
            t0 = time.perf_counter_ns()
            g = knn_graph(x, cfg.k)
            record(layer, "graph_construction",
                   (time.perf_counter_ns() - t0) / 1e9, (n, cfg.k))
            graphs.append(g)
        else:
            g = graphs[-1]
        graph_index.append(len(graphs) - 1)
        t0 = time.perf_counter_ns()
        x = edgeconv_update(x, g, spec, params)
        record(layer, "feature_update", (time.perf_counter_ns() - t0) / 1e9, x.shape)
        dec_outputs.append(x)

    t0 = time.perf_counter_ns()
    cat = np.concatenate(dec_outputs, axis=1)
    record("concat", "concat", (time.perf_counter_ns() - t0) / 1e9, cat.shape)

    t0 = time.perf_counter_ns()
    embedded = mlp_forward(cfg.embed_spec(), block_params(cfg, w, "embed", cfg.embed_spec()), cat)
    record("embed", "linear", (time.perf_counter_ns() - t0) / 1e9, embedded.shape)

    t0 = time.perf_counter_ns()
    pooled = global_max_pool(embedded)
    record("pool", "pool", (time.perf_counter_ns() - t0) / 1e9, pooled.shape)

    t0 = time.perf_counter_ns()
    logits = mlp_forward(cfg.head_spec(), block_params(cfg, w, "head", cfg.head_spec()), pooled)
    log_probs = log_softmax(logits)
    record("head", "head", (time.perf_counter_ns() - t0) / 1e9, log_probs.shape)

    total = (time.perf_counter_ns() - t_start) / 1e9
    trace = ForwardTrace(records=tuple(records), graphs=tuple(graphs),
                         graph_index_per_layer=tuple(graph_index), total_seconds=total)
    return log_probs, trace


# --- plain-text config document --------------------------------------------

_LIST_KEYS = {"dec_channels", "head_channels"}
_INT_KEYS = {"k", "num_points", "in_dim", "embed_dim", "num_classes", "static_tail"}
_FLOAT_KEYS = {"dropout"}


def config_to_text(cfg: ModelConfig) -> str:
    """Render the config as the documented ``key = value`` document."""
    lines = []
    for key in ("k", "num_points", "in_dim", "dec_channels", "embed_dim",
                "head_channels", "num_classes", "static_tail", "dropout"):
        value = getattr(cfg, key)
        if key in _LIST_KEYS:
            value = ", ".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> ModelConfig:
    """Parse the ``key = value`` document; unlisted keys keep defaults."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno} is not 'key = value': {raw!r}")
        key, _, val = (part.strip() for part in line.partition("="))
        if key in values:
            raise ConfigError(f"duplicate config key {key!r} (line {lineno})")
        if key not in _LIST_KEYS | _INT_KEYS | _FLOAT_KEYS:
            raise ConfigError(f"unknown config key {key!r} (line {lineno})")
        try:
            if key in _LIST_KEYS:
                values[key] = tuple(int(v.strip()) for v in val.split(",") if v.strip())
            elif key in _INT_KEYS:
                values[key] = int(val)
            else:
                values[key] = float(val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r} (line {lineno}): {val!r}") from exc
    return ModelConfig(**values)


def with_static_tail(cfg: ModelConfig, tail: int) -> ModelConfig:
    return replace(cfg, static_tail=tail)


def with_k(cfg: ModelConfig, k: int) -> ModelConfig:
    return replace(cfg, k=k)
