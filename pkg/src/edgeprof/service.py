"""FastAPI service wrapping the engine.

Binary payloads (PCF clouds, ECW weights) travel base64-encoded inside
the JSON requests/responses so the service is self-contained over the
wire. Timing always happens inside the engine, never around the HTTP
layer, so reports are identical whether the service is called in-process
or over the network.

Run with: ``uvicorn edgeprof.service:app``.
"""

from __future__ import annotations

import base64
import binascii
from typing import Literal

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .errors import EdgeprofError, FormatError
from .formats import PointCloud, ecw_from_bytes, ecw_to_bytes, pcf_from_bytes, pcf_to_bytes, synth_cloud
from .model import ModelConfig, WeightStore, forward, random_weights
from .profiler import (DEFAULT_K_GRID, DEFAULT_TAILS, BenchPlan, bench,
                       compare_variants, memory_report, sweep_k)
from .tensor import Rng
from . import _kernels

app = FastAPI(title="edgeprof", version=__version__)


class EngineConfig(BaseModel):
    k: int = 20
    num_points: int = 1024
    in_dim: int = 3
    dec_channels: list[int] = Field(default_factory=lambda: [64, 64, 64, 128])
    embed_dim: int = 1024
    head_channels: list[int] = Field(default_factory=lambda: [512, 256])
    num_classes: int = 40
    static_tail: int = 0
    dropout: float = 0.5

    def to_config(self) -> ModelConfig:
        return ModelConfig(k=self.k, num_points=self.num_points, in_dim=self.in_dim,
                           dec_channels=tuple(self.dec_channels), embed_dim=self.embed_dim,
                           head_channels=tuple(self.head_channels),
                           num_classes=self.num_classes, static_tail=self.static_tail,
                           dropout=self.dropout)


class PlanModel(BaseModel):
    runs: int = 100
    warmup: int = 10
    seed: int = 42
    threads: Literal["1", "auto"] = "1"

    def to_plan(self) -> BenchPlan:
        return BenchPlan(runs=self.runs, warmup=self.warmup, seed=self.seed,
                         thread_mode="single" if self.threads == "1" else "parallel")


class BenchRequest(BaseModel):
    config: EngineConfig = Field(default_factory=EngineConfig)
    plan: PlanModel = Field(default_factory=PlanModel)
    cloud_pcf_b64: str | None = None
    weights_ecw_b64: str | None = None


class SweepKRequest(BenchRequest):
    ks: list[int] = Field(default_factory=lambda: list(DEFAULT_K_GRID))


class CompareRequest(BenchRequest):
    tails: list[int] = Field(default_factory=lambda: list(DEFAULT_TAILS))


class MemReportRequest(BaseModel):
    config: EngineConfig = Field(default_factory=EngineConfig)
    inferences: int = 100


class InferRequest(BaseModel):
    config: EngineConfig = Field(default_factory=EngineConfig)
    cloud_pcf_b64: str | None = None
    weights_ecw_b64: str | None = None
    seed: int = 42
    threads: Literal["1", "auto"] = "1"


class InferResponse(BaseModel):
    class_index: int
    log_probs: list[float]
    label: int | None


class GenWeightsRequest(BaseModel):
    config: EngineConfig = Field(default_factory=EngineConfig)
    seed: int = 42


class GenCloudRequest(BaseModel):
    num_points: int = 1024
    seed: int = 42
    label: int | None = None


@app.exception_handler(EdgeprofError)
async def _engine_error(_: Request, exc: EdgeprofError) -> JSONResponse:
    kind = "format" if isinstance(exc, FormatError) else "config"
    return JSONResponse(status_code=400, content={"detail": str(exc), "error_kind": kind})


def _decode_b64(payload: str, what: str) -> bytes:
    try:
        return base64.b64decode(payload, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise FormatError(f"{what} is not valid base64: {exc}") from exc


def _resolve_cloud(b64: str | None, num_points: int, seed: int) -> tuple[PointCloud, str]:
    if b64 is not None:
        return pcf_from_bytes(_decode_b64(b64, "cloud payload")), "pcf"
    return synth_cloud(num_points, Rng(seed)), f"synthetic(seed={seed})"


def _resolve_weights(b64: str | None, cfg: ModelConfig, seed: int) -> tuple[WeightStore, str]:
    if b64 is not None:
        return WeightStore(ecw_from_bytes(_decode_b64(b64, "weights payload"))), "ecw"
    return random_weights(cfg, Rng(seed)), f"random(seed={seed})"


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/bench")
def bench_endpoint(req: BenchRequest) -> dict:
    cfg = req.config.to_config()
    plan = req.plan.to_plan()
    cloud, cloud_src = _resolve_cloud(req.cloud_pcf_b64, cfg.num_points, plan.seed)
    weights, w_src = _resolve_weights(req.weights_ecw_b64, cfg, plan.seed)
    report = bench(cfg, weights, cloud, plan, weights_source=w_src, cloud_source=cloud_src)
    return report.to_dict()


@app.post("/sweep-k")
def sweep_k_endpoint(req: SweepKRequest) -> dict:
    cfg = req.config.to_config()
    plan = req.plan.to_plan()
    cloud, cloud_src = _resolve_cloud(req.cloud_pcf_b64, cfg.num_points, plan.seed)
    w_per_k = None
    if req.weights_ecw_b64 is not None:
        store, _ = _resolve_weights(req.weights_ecw_b64, cfg, plan.seed)
        w_per_k = {k: store for k in req.ks}
    reports = sweep_k(cfg, w_per_k, cloud, plan, ks=tuple(req.ks))
    for r in reports:
        r.metadata["cloud_source"] = cloud_src
    return {"reports": [r.to_dict() for r in reports]}


@app.post("/compare")
def compare_endpoint(req: CompareRequest) -> dict:
    cfg = req.config.to_config()
    plan = req.plan.to_plan()
    cloud, cloud_src = _resolve_cloud(req.cloud_pcf_b64, cfg.num_points, plan.seed)
    weights, w_src = _resolve_weights(req.weights_ecw_b64, cfg, plan.seed)
    reports = compare_variants(cfg, weights, cloud, plan, tails=tuple(req.tails))
    for r in reports:
        r.metadata["cloud_source"] = cloud_src
        r.metadata["weights_source"] = w_src
    return {"reports": [r.to_dict() for r in reports]}


@app.post("/mem-report")
def mem_report_endpoint(req: MemReportRequest) -> dict:
    cfg = req.config.to_config()
    return memory_report(cfg, n=cfg.num_points, inferences=req.inferences).to_dict()


@app.post("/infer")
def infer_endpoint(req: InferRequest) -> InferResponse:
    cfg = req.config.to_config()
    cloud, _ = _resolve_cloud(req.cloud_pcf_b64, cfg.num_points, req.seed)
    weights, _ = _resolve_weights(req.weights_ecw_b64, cfg, req.seed)
    previous = _kernels.get_thread_mode()
    _kernels.set_thread_mode("single" if req.threads == "1" else "parallel")
    try:
        log_probs, _trace = forward(cfg, weights, cloud)
    finally:
        _kernels.set_thread_mode(previous)
    return InferResponse(class_index=int(log_probs.argmax()),
                         log_probs=[float(v) for v in log_probs],
                         label=cloud.label)


@app.post("/gen-weights")
def gen_weights_endpoint(req: GenWeightsRequest) -> dict:
    cfg = req.config.to_config()
    store = random_weights(cfg, Rng(req.seed))
    return {"weights_ecw_b64": base64.b64encode(ecw_to_bytes(store)).decode("ascii"),
            "seed": req.seed}


@app.post("/gen-cloud")
def gen_cloud_endpoint(req: GenCloudRequest) -> dict:
    cloud = synth_cloud(req.num_points, Rng(req.seed), label=req.label)
    return {"cloud_pcf_b64": base64.b64encode(pcf_to_bytes(cloud)).decode("ascii"),
            "seed": req.seed}
