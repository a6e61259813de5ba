"""Thin command-line client for the engine service.

Every subcommand is a single request against the FastAPI app: in-process
by default (one invocation, one process), or against a running server
when ``--server URL`` is given. Rendering (JSON passthrough or CSV) and
local file handling live here; all engine work happens behind the
service endpoints.

Exit codes: 0 success, 1 usage error, 2 I/O or format error,
3 configuration error.
"""

from __future__ import annotations

import argparse
import asyncio
import base64
import json
import sys
from pathlib import Path

import httpx

from . import formats, service
from .errors import ConfigError, EdgeprofError, FormatError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_CONFIG = 3

_CONFIG_KEYS = ("k", "num_points", "in_dim", "dec_channels", "embed_dim",
                "head_channels", "num_classes", "static_tail", "dropout")


class UsageError(Exception):
    pass


class ServiceError(Exception):
    def __init__(self, status: int, detail: str, kind: str):
        super().__init__(detail)
        self.status = status
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the spec wants 1
        raise UsageError(message)


def _add_shared(p: argparse.ArgumentParser, *, timing: bool = True,
                files: bool = True) -> None:
    p.add_argument("--points", type=int, default=None, help="points per cloud (default 1024)")
    p.add_argument("--k", type=int, default=None, help="neighbors per node (default 20)")
    p.add_argument("--static-tail", type=int, default=None,
                   help="trailing EdgeConv layers that reuse the last graph (default 0)")
    p.add_argument("--seed", type=int, default=42, help="seed for synthetic cloud and random weights")
    if timing:
        p.add_argument("--runs", type=int, default=100, help="timed forward passes (default 100)")
        p.add_argument("--warmup", type=int, default=10, help="untimed passes first (default 10)")
        p.add_argument("--threads", choices=("1", "auto"), default="1",
                       help="engine parallelism (default 1 = single-threaded)")
    if files:
        p.add_argument("--weights", type=Path, default=None,
                       help="ECW weight file (random weights if absent)")
        p.add_argument("--input", type=Path, default=None,
                       help="PCF point-cloud file (synthetic if absent)")
    p.add_argument("--config", type=Path, default=None,
                   help="plain-text model configuration document")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", type=Path, default=None, help="output path (default stdout)")
    p.add_argument("--server", default=None,
                   help="base URL of a running service (default: in-process)")


def build_parser() -> _Parser:
    parser = _Parser(prog="edgeprof",
                     description="EdgeConv dynamic-graph engine: benchmarks, memory "
                                 "accounting and inference")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="profile one configuration")
    _add_shared(p)

    p = sub.add_parser("sweep-k", help="profile across a grid of k values")
    _add_shared(p)
    p.add_argument("--k-list", default="5,10,15,20,25,30",
                   help="comma-separated k grid (default 5,10,15,20,25,30)")

    p = sub.add_parser("compare", help="profile across static-tail variants")
    _add_shared(p)
    p.add_argument("--tails", default="0,1,2",
                   help="comma-separated static-tail values (default 0,1,2)")

    p = sub.add_parser("mem-report", help="analytic memory table")
    _add_shared(p, timing=False, files=False)
    p.add_argument("--inferences", type=int, default=100,
                   help="inference count for the cumulative figure (default 100)")

    p = sub.add_parser("infer", help="classify one cloud")
    _add_shared(p, timing=False)
    p.add_argument("--threads", choices=("1", "auto"), default="1")

    p = sub.add_parser("gen-weights", help="write deterministic random weights to ECW")
    _add_shared(p, timing=False, files=False)

    p = sub.add_parser("gen-cloud", help="write a deterministic synthetic cloud to PCF")
    _add_shared(p, timing=False, files=False)
    p.add_argument("--label", type=int, default=None, help="class label to embed (default none)")

    return parser


def _int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(v.strip()) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"{flag} expects comma-separated integers, got {text!r}") from exc
    if not values:
        raise UsageError(f"{flag} must name at least one value")
    return values


def _engine_config(args: argparse.Namespace) -> dict:
    """Service config dict: file config (if any) overridden by explicit flags."""
    base: dict = {}
    if args.config is not None:
        from .model import config_from_text
        cfg = config_from_text(Path(args.config).read_text())
        base = {key: getattr(cfg, key) for key in _CONFIG_KEYS}
        base["dec_channels"] = list(cfg.dec_channels)
        base["head_channels"] = list(cfg.head_channels)
    if getattr(args, "points", None) is not None:
        base["num_points"] = args.points
    if getattr(args, "k", None) is not None:
        base["k"] = args.k
    if getattr(args, "static_tail", None) is not None:
        base["static_tail"] = args.static_tail
    return base


def _b64_file(path: Path | None, what: str) -> str | None:
    if path is None:
        return None
    try:
        return base64.b64encode(Path(path).read_bytes()).decode("ascii")
    except OSError as exc:
        raise FormatError(f"cannot read {what} file {path}: {exc.strerror}") from exc


async def _post_async(server: str | None, path: str, payload: dict) -> dict:
    if server is None:
        transport = httpx.ASGITransport(app=service.app)
        client = httpx.AsyncClient(transport=transport, base_url="http://edgeprof.local",
                                   timeout=None)
    else:
        client = httpx.AsyncClient(base_url=server, timeout=None)
    async with client:
        response = await client.post(path, json=payload)
    if response.status_code != 200:
        try:
            body = response.json()
        except ValueError:
            body = {}
        detail = body.get("detail", response.text)
        kind = body.get("error_kind", "usage" if response.status_code == 422 else "io")
        raise ServiceError(response.status_code, str(detail), kind)
    return response.json()


def _post(server: str | None, path: str, payload: dict) -> dict:
    return asyncio.run(_post_async(server, path, payload))


def _emit_text(args: argparse.Namespace, text: str) -> None:
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)


def _emit_bytes(args: argparse.Namespace, data: bytes) -> None:
    if args.out is None:
        sys.stdout.buffer.write(data)
    else:
        Path(args.out).write_bytes(data)


def _plan_payload(args: argparse.Namespace) -> dict:
    return {"runs": args.runs, "warmup": args.warmup, "seed": args.seed,
            "threads": args.threads}


def run(args: argparse.Namespace) -> None:
    command = args.command
    if command == "bench":
        payload = {"config": _engine_config(args), "plan": _plan_payload(args),
                   "cloud_pcf_b64": _b64_file(args.input, "cloud"),
                   "weights_ecw_b64": _b64_file(args.weights, "weights")}
        report = _post(args.server, "/bench", payload)
        _emit_text(args, formats.report_json(report) if args.format == "json"
                   else formats.report_csv(report))
    elif command == "sweep-k":
        payload = {"config": _engine_config(args), "plan": _plan_payload(args),
                   "cloud_pcf_b64": _b64_file(args.input, "cloud"),
                   "weights_ecw_b64": _b64_file(args.weights, "weights"),
                   "ks": _int_list(args.k_list, "--k-list")}
        result = _post(args.server, "/sweep-k", payload)
        _emit_text(args, formats.report_json(result) if args.format == "json"
                   else formats.reports_csv(result["reports"], "k"))
    elif command == "compare":
        payload = {"config": _engine_config(args), "plan": _plan_payload(args),
                   "cloud_pcf_b64": _b64_file(args.input, "cloud"),
                   "weights_ecw_b64": _b64_file(args.weights, "weights"),
                   "tails": _int_list(args.tails, "--tails")}
        result = _post(args.server, "/compare", payload)
        _emit_text(args, formats.report_json(result) if args.format == "json"
                   else formats.reports_csv(result["reports"], "static_tail"))
    elif command == "mem-report":
        payload = {"config": _engine_config(args), "inferences": args.inferences}
        result = _post(args.server, "/mem-report", payload)
        _emit_text(args, formats.report_json(result) if args.format == "json"
                   else formats.memory_csv(result))
    elif command == "infer":
        payload = {"config": _engine_config(args), "seed": args.seed,
                   "threads": args.threads,
                   "cloud_pcf_b64": _b64_file(args.input, "cloud"),
                   "weights_ecw_b64": _b64_file(args.weights, "weights")}
        result = _post(args.server, "/infer", payload)
        _emit_text(args, formats.report_json(result) if args.format == "json"
                   else formats.infer_csv(result))
    elif command == "gen-weights":
        payload = {"config": _engine_config(args), "seed": args.seed}
        result = _post(args.server, "/gen-weights", payload)
        _emit_bytes(args, base64.b64decode(result["weights_ecw_b64"]))
    elif command == "gen-cloud":
        points = args.points if args.points is not None else 1024
        payload = {"num_points": points, "seed": args.seed, "label": args.label}
        result = _post(args.server, "/gen-cloud", payload)
        _emit_bytes(args, base64.b64decode(result["cloud_pcf_b64"]))
    else:  # pragma: no cover - argparse enforces the choices
        raise UsageError(f"unknown command {command!r}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        run(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ServiceError as exc:
        print(f"service error ({exc.status}): {exc}", file=sys.stderr)
        if exc.kind == "config":
            return EXIT_CONFIG
        if exc.kind == "usage":
            return EXIT_USAGE
        return EXIT_IO
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except httpx.HTTPError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_IO
    except EdgeprofError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def entrypoint() -> None:  # console-script shim
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
