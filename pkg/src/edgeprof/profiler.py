"""Instrumented benchmarking and analytic memory accounting.

Latency protocol: warmup passes (untimed), then timed runs at batch size
one on the monotonic high-resolution clock, single-threaded by default so
the graph-construction vs feature-update split reflects algorithmic cost
rather than thread scaling. A layer's latency is by definition the sum of
its stage latencies; end-to-end latency is measured independently by an
outer timer, and the residual between the two (plus concat/linear/pool/
head) is reported as the "other" share.

Memory is accounted analytically from tensor shapes (see
``model.stage_plan``), never from allocator hooks: the properties of
interest — strict linearity in k and the exact per-layer reduction when a
dynamic layer becomes static — are properties of the shapes themselves
and hold on any platform.
"""

from __future__ import annotations

import contextlib
import gc
import platform
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, __version__
from .errors import ConfigError
from .formats import PointCloud
from .knn import SELECTION_ALGORITHM
from .model import (ForwardTrace, ModelConfig, WeightStore, forward,
                    random_weights, stage_plan, with_k, with_static_tail)
from .tensor import Rng

DEFAULT_K_GRID = (5, 10, 15, 20, 25, 30)
DEFAULT_TAILS = (0, 1, 2)

_THREAD_MODES = ("single", "parallel")


@dataclass(frozen=True)
class BenchPlan:
    """Measurement protocol for one benchmark run."""

    runs: int = 100
    warmup: int = 10
    seed: int = 42
    thread_mode: str = "single"
    clock: str = "perf_counter_ns"

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if self.warmup < 0:
            raise ConfigError(f"warmup must be >= 0, got {self.warmup}")
        if self.thread_mode not in _THREAD_MODES:
            raise ConfigError(f"thread_mode must be one of {_THREAD_MODES}, got {self.thread_mode!r}")
        if self.clock != "perf_counter_ns":
            raise ConfigError(
                f"unsupported clock {self.clock!r}: this engine times with "
                "time.perf_counter_ns (monotonic); pass clock='perf_counter_ns'")


@dataclass(frozen=True)
class StageStats:
    layer: str
    stage: str
    mean_ms: float
    median_ms: float
    stddev_ms: float
    p25_ms: float
    p75_ms: float
    bytes_persistent: int
    bytes_transient: int

    def to_dict(self) -> dict:
        return {"name": self.layer, "stage": self.stage, "mean_ms": self.mean_ms,
                "median_ms": self.median_ms, "stddev_ms": self.stddev_ms,
                "p25_ms": self.p25_ms, "p75_ms": self.p75_ms,
                "bytes_persistent": self.bytes_persistent,
                "bytes_transient": self.bytes_transient}


@dataclass(frozen=True)
class LatencySummary:
    mean_ms: float
    median_ms: float
    stddev_ms: float
    p25_ms: float
    p75_ms: float
    min_ms: float
    max_ms: float

    def to_dict(self) -> dict:
        return {"mean_ms": self.mean_ms, "median_ms": self.median_ms,
                "stddev_ms": self.stddev_ms, "p25_ms": self.p25_ms,
                "p75_ms": self.p75_ms, "min_ms": self.min_ms, "max_ms": self.max_ms}


@dataclass(frozen=True)
class ProfileReport:
    metadata: dict
    layers: tuple[StageStats, ...]
    end_to_end: LatencySummary
    knn_share: float
    update_share: float
    other_share: float
    layer_totals_ms: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"metadata": self.metadata,
                "layers": [s.to_dict() for s in self.layers],
                "end_to_end": self.end_to_end.to_dict(),
                "knn_share": self.knn_share,
                "update_share": self.update_share,
                "other_share": self.other_share,
                "layer_totals_ms": self.layer_totals_ms}


def _summary(ms: list[float]) -> LatencySummary:
    arr = np.asarray(ms, dtype=np.float64)
    return LatencySummary(
        mean_ms=float(arr.mean()), median_ms=float(np.median(arr)),
        stddev_ms=float(arr.std()), p25_ms=float(np.percentile(arr, 25)),
        p75_ms=float(np.percentile(arr, 75)), min_ms=float(arr.min()),
        max_ms=float(arr.max()))


@contextlib.contextmanager
def _measurement_guard(plan: BenchPlan):
    """Thread mode per plan, garbage collector paused while timing."""
    previous = _kernels.get_thread_mode()
    _kernels.set_thread_mode(plan.thread_mode)
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if gc_was_enabled:
            gc.enable()
        _kernels.set_thread_mode(previous)


def _metadata(cfg: ModelConfig, plan: BenchPlan, n_points: int,
              weights_source: str, cloud_source: str, schedule: str) -> dict:
    clock_info = time.get_clock_info("perf_counter")
    return {
        "engine_version": __version__,
        "host": platform.platform(),
        "machine": platform.machine(),
        "python": platform.python_version(),
        "knn_algorithm": SELECTION_ALGORITHM,
        "thread_mode": plan.thread_mode,
        "clock": {"name": plan.clock, "resolution_s": clock_info.resolution,
                  "monotonic": clock_info.monotonic},
        "runs": plan.runs,
        "warmup": plan.warmup,
        "seed": plan.seed,
        "schedule": schedule,
        "k": cfg.k,
        "static_tail": cfg.static_tail,
        "n_points": n_points,
        "config": {
            "k": cfg.k, "num_points": cfg.num_points, "in_dim": cfg.in_dim,
            "dec_channels": list(cfg.dec_channels), "embed_dim": cfg.embed_dim,
            "head_channels": list(cfg.head_channels), "num_classes": cfg.num_classes,
            "static_tail": cfg.static_tail, "dropout": cfg.dropout,
        },
        "weights_source": weights_source,
        "cloud_source": cloud_source,
    }


def bench(cfg: ModelConfig, w: WeightStore, cloud: PointCloud, plan: BenchPlan,
          weights_source: str = "caller", cloud_source: str = "caller") -> ProfileReport:
    """Warmup, then timed forward passes; aggregate per (layer, stage)."""
    with _measurement_guard(plan):
        for _ in range(plan.warmup):
            forward(cfg, w, cloud)
        traces: list[ForwardTrace] = []
        for _ in range(plan.runs):
            traces.append(forward(cfg, w, cloud)[1])
    return _report_from_traces(cfg, plan, cloud.n, traces, weights_source,
                               cloud_source, schedule="sequential")


def _report_from_traces(cfg: ModelConfig, plan: BenchPlan, n_points: int,
                        traces: list[ForwardTrace], weights_source: str,
                        cloud_source: str, schedule: str) -> ProfileReport:
    # (layer, stage) keys in execution order; structure depends only on cfg.
    keys = [(r.layer, r.stage) for r in traces[0].records]
    times: dict[tuple[str, str], list[float]] = {key: [] for key in keys}
    for trace in traces:
        for r in trace.records:
            times[(r.layer, r.stage)].append(r.seconds * 1e3)
    first = {(r.layer, r.stage): r for r in traces[0].records}

    layers = []
    for key in keys:
        ms = times[key]
        s = _summary(ms)
        layers.append(StageStats(
            layer=key[0], stage=key[1], mean_ms=s.mean_ms, median_ms=s.median_ms,
            stddev_ms=s.stddev_ms, p25_ms=s.p25_ms, p75_ms=s.p75_ms,
            bytes_persistent=first[key].bytes_persistent,
            bytes_transient=first[key].bytes_transient))

    e2e_ms = [t.total_seconds * 1e3 for t in traces]
    total_e2e = sum(e2e_ms)
    knn_total = sum(sum(times[k]) for k in keys if k[1] == "graph_construction")
    update_total = sum(sum(times[k]) for k in keys if k[1] == "feature_update")
    other_total = total_e2e - knn_total - update_total

    layer_totals: dict[str, float] = {}
    for stat in layers:
        layer_totals[stat.layer] = layer_totals.get(stat.layer, 0.0) + stat.median_ms

    return ProfileReport(
        metadata=_metadata(cfg, plan, n_points, weights_source, cloud_source, schedule),
        layers=tuple(layers),
        end_to_end=_summary(e2e_ms),
        knn_share=knn_total / total_e2e,
        update_share=update_total / total_e2e,
        other_share=other_total / total_e2e,
        layer_totals_ms=layer_totals)


def sweep_k(cfg_base: ModelConfig, w_per_k: dict[int, WeightStore] | None,
            cloud: PointCloud, plan: BenchPlan,
            ks: tuple[int, ...] = DEFAULT_K_GRID) -> list[ProfileReport]:
    """One report per k; weights random (latency-only) unless supplied per k."""
    if not ks:
        raise ConfigError("k sweep needs at least one k")
    reports = []
    for k in ks:
        cfg = with_k(cfg_base, k)
        if w_per_k is not None and k in w_per_k:
            w, source = w_per_k[k], f"caller(k={k})"
        else:
            w, source = random_weights(cfg, Rng(plan.seed)), f"random(seed={plan.seed})"
        reports.append(bench(cfg, w, cloud, plan, weights_source=source,
                             cloud_source="caller"))
    return reports


def compare_variants(cfg: ModelConfig, w: WeightStore, cloud: PointCloud,
                     plan: BenchPlan, tails: tuple[int, ...] = DEFAULT_TAILS,
                     interleaved: bool = True) -> list[ProfileReport]:
    """Reports across static-tail settings (same weights: shapes are tail-independent).

    By default timed runs are interleaved round-robin across the variants
    (a paired design): slow machine drift then biases every variant
    equally instead of whichever happened to run last, which is what the
    between-variant ordering comparison cares about. Each variant still
    gets ``plan.runs`` timed passes after ``plan.warmup`` untimed ones.
    """
    if not len(tails):
        raise ConfigError("variant comparison needs at least one static_tail value")
    if not interleaved:
        return [bench(with_static_tail(cfg, t), w, cloud, plan,
                      weights_source="caller", cloud_source="caller")
                for t in tails]
    cfgs = [with_static_tail(cfg, t) for t in tails]
    traces: list[list[ForwardTrace]] = [[] for _ in cfgs]
    with _measurement_guard(plan):
        for variant in cfgs:
            for _ in range(plan.warmup):
                forward(variant, w, cloud)
        for _ in range(plan.runs):
            for i, variant in enumerate(cfgs):
                traces[i].append(forward(variant, w, cloud)[1])
    return [_report_from_traces(variant, plan, cloud.n, traces[i],
                                weights_source="caller", cloud_source="caller",
                                schedule="interleaved")
            for i, variant in enumerate(cfgs)]


# --- analytic memory report --------------------------------------------------

@dataclass(frozen=True)
class MemoryRow:
    layer: str
    stage: str
    bytes_persistent: int
    bytes_transient: int
    bytes_peak: int

    def to_dict(self) -> dict:
        return {"layer": self.layer, "stage": self.stage,
                "bytes_persistent": self.bytes_persistent,
                "bytes_transient": self.bytes_transient,
                "bytes_peak": self.bytes_peak}


@dataclass(frozen=True)
class MemoryReport:
    metadata: dict
    rows: tuple[MemoryRow, ...]
    knn_bytes_per_inference: int
    knn_bytes_total: int
    inferences: int
    peak_bytes: int

    def to_dict(self) -> dict:
        return {"metadata": self.metadata,
                "rows": [r.to_dict() for r in self.rows],
                "knn_bytes_per_inference": self.knn_bytes_per_inference,
                "knn_bytes_total": self.knn_bytes_total,
                "inferences": self.inferences,
                "peak_bytes": self.peak_bytes}


def memory_report(cfg: ModelConfig, n: int | None = None,
                  inferences: int = 100) -> MemoryReport:
    """Shape-derived memory table for one forward, cumulated over inferences.

    Peak tracking uses a stage-granular lifetime model: the input cloud is
    freed once the first update consumes it, a graph product lives until
    its own layer's update finishes, EdgeConv outputs live until the
    concatenation, the concatenated tensor until the shared linear, and so
    on. Reuse of an index matrix by later static layers is not tracked
    separately (it is dominated by the feature buffers).
    """
    if inferences < 1:
        raise ConfigError(f"inferences must be >= 1, got {inferences}")
    n = cfg.num_points if n is None else n
    if n <= cfg.k:
        raise ConfigError(f"n must exceed k ({cfg.k}), got {n}")

    plans = stage_plan(cfg, n)
    rows: list[MemoryRow] = []
    alive = 4 * n * cfg.in_dim
    input_bytes = alive
    pending_graph = 0
    dec_out_bytes = 0
    consumed_input = False
    for p in plans:
        peak = alive + p.bytes_transient + p.bytes_persistent
        rows.append(MemoryRow(p.layer, p.stage, p.bytes_persistent,
                              p.bytes_transient, peak))
        if p.stage == "graph_construction":
            alive += p.bytes_persistent
            pending_graph = p.bytes_persistent
        elif p.stage == "feature_update":
            alive += p.bytes_persistent - pending_graph
            pending_graph = 0
            dec_out_bytes += p.bytes_persistent
            if not consumed_input:
                alive -= input_bytes
                consumed_input = True
        elif p.stage == "concat":
            alive += p.bytes_persistent - dec_out_bytes
        elif p.stage == "linear":
            cat_bytes = 4 * n * cfg.concat_dim
            alive += p.bytes_persistent - cat_bytes
        elif p.stage == "pool":
            alive += p.bytes_persistent - 4 * n * cfg.embed_dim
        elif p.stage == "head":
            alive = p.bytes_persistent

    knn_per = sum(r.bytes_persistent for r in rows if r.stage == "graph_construction")
    metadata = {
        "engine_version": __version__,
        "accounting": "analytic-shape-model",
        "n_points": n,
        "k": cfg.k,
        "static_tail": cfg.static_tail,
        "config": {
            "k": cfg.k, "num_points": cfg.num_points, "in_dim": cfg.in_dim,
            "dec_channels": list(cfg.dec_channels), "embed_dim": cfg.embed_dim,
            "head_channels": list(cfg.head_channels), "num_classes": cfg.num_classes,
            "static_tail": cfg.static_tail, "dropout": cfg.dropout,
        },
    }
    return MemoryReport(metadata=metadata, rows=tuple(rows),
                        knn_bytes_per_inference=knn_per,
                        knn_bytes_total=knn_per * inferences,
                        inferences=inferences,
                        peak_bytes=max(r.bytes_peak for r in rows))
