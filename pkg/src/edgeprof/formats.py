"""On-disk formats and report serialization.

Binary layouts (everything little-endian):

* PCF v1 (point cloud): magic ``PCF1`` | u32 n | u32 c | i32 label
  (-1 = none) | n*c float32 row-major.
* ECW v1 (weights): magic ``ECW1`` | u32 tensor_count | per tensor:
  u16 name_len | UTF-8 name | u8 rank | rank x u32 dims | float32
  payload row-major. Tensors are written in ascending name order so a
  given store always produces identical bytes.

Reports are serialized from the plain dicts the profiler emits, with a
stable key order, so identical runs produce byte-identical documents
modulo the timing values themselves.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import (BadMagicError, DegenerateCloudError, FormatVersionError,
                     ShapeError, TruncatedFileError)
from .tensor import DTYPE, Rng, check_tensor, require_finite

PCF_MAGIC = b"PCF1"
ECW_MAGIC = b"ECW1"


@dataclass(frozen=True)
class PointCloud:
    """n points with c-dimensional features and an optional class label."""

    features: np.ndarray
    label: int | None = None

    def __post_init__(self):
        check_tensor(self.features, 2, "point cloud features")
        if self.features.shape[0] < 2:
            raise ShapeError(f"point cloud needs at least 2 points, got {self.features.shape[0]}")
        require_finite(self.features, "point cloud features")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def c(self) -> int:
        return self.features.shape[1]


def normalize(cloud: PointCloud) -> PointCloud:
    """Center on the centroid and scale into [-1, 1].

    One global scale factor (the maximum absolute coordinate after
    centering) preserves the cloud's aspect ratio; at least one
    coordinate lands exactly on an endpoint.
    """
    feats = cloud.features
    centered = feats - feats.mean(axis=0)
    scale = np.max(np.abs(centered))
    if scale == 0.0:
        raise DegenerateCloudError("degenerate cloud: all points identical")
    return PointCloud(features=centered / scale, label=cloud.label)


def synth_cloud(n: int, rng: Rng, label: int | None = None) -> PointCloud:
    """n points drawn uniformly from the [-1, 1]^3 cube."""
    return PointCloud(features=rng.uniform(-1.0, 1.0, (n, 3)), label=label)


# --- PCF --------------------------------------------------------------------

def _take(buf: bytes, offset: int, count: int, what: str) -> tuple[bytes, int]:
    if offset + count > len(buf):
        raise TruncatedFileError(f"truncated {what}: need {count} bytes at offset {offset}, "
                                 f"file has {len(buf)}")
    return buf[offset:offset + count], offset + count


def _check_magic(buf: bytes, magic: bytes, family: str) -> int:
    got, offset = _take(buf, 0, 4, f"{family} header")
    if got == magic:
        return offset
    if got[:3] == magic[:3]:
        raise FormatVersionError(f"unsupported {family} version: {got!r} (expected {magic!r})")
    raise BadMagicError(f"bad magic {got!r}: not a {family} file")


def pcf_to_bytes(cloud: PointCloud) -> bytes:
    label = -1 if cloud.label is None else int(cloud.label)
    header = PCF_MAGIC + struct.pack("<IIi", cloud.n, cloud.c, label)
    return header + cloud.features.astype("<f4", copy=False).tobytes()


def pcf_from_bytes(buf: bytes) -> PointCloud:
    offset = _check_magic(buf, PCF_MAGIC, "PCF")
    raw, offset = _take(buf, offset, 12, "PCF header")
    n, c, label = struct.unpack("<IIi", raw)
    payload, offset = _take(buf, offset, 4 * n * c, "PCF payload")
    feats = np.frombuffer(payload, dtype="<f4").reshape(n, c).astype(DTYPE)
    return PointCloud(features=np.ascontiguousarray(feats),
                      label=None if label < 0 else label)


def write_pcf(path: str | Path, cloud: PointCloud) -> None:
    Path(path).write_bytes(pcf_to_bytes(cloud))


def read_pcf(path: str | Path) -> PointCloud:
    return pcf_from_bytes(Path(path).read_bytes())


# --- ECW --------------------------------------------------------------------

def ecw_to_bytes(tensors: Mapping[str, np.ndarray]) -> bytes:
    out = bytearray(ECW_MAGIC)
    out += struct.pack("<I", len(tensors))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype=DTYPE)
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ShapeError(f"tensor name too long: {name[:32]}...")
        if arr.ndim > 0xFF:
            raise ShapeError(f"tensor rank {arr.ndim} exceeds format limit")
        out += struct.pack("<H", len(encoded)) + encoded
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.astype("<f4", copy=False).tobytes()
    return bytes(out)


def ecw_from_bytes(buf: bytes) -> dict[str, np.ndarray]:
    offset = _check_magic(buf, ECW_MAGIC, "ECW")
    raw, offset = _take(buf, offset, 4, "ECW tensor count")
    (count,) = struct.unpack("<I", raw)
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        raw, offset = _take(buf, offset, 2, "ECW name length")
        (name_len,) = struct.unpack("<H", raw)
        raw, offset = _take(buf, offset, name_len, "ECW tensor name")
        name = raw.decode("utf-8")
        raw, offset = _take(buf, offset, 1, "ECW rank")
        rank = raw[0]
        raw, offset = _take(buf, offset, 4 * rank, "ECW dims")
        dims = struct.unpack(f"<{rank}I", raw)
        size = 1
        for d in dims:
            size *= d
        payload, offset = _take(buf, offset, 4 * size, f"ECW payload of {name}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(DTYPE)
        tensors[name] = np.ascontiguousarray(arr)
    return tensors


def write_ecw(path: str | Path, tensors: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(ecw_to_bytes(tensors))


def read_ecw(path: str | Path) -> dict[str, np.ndarray]:
    return ecw_from_bytes(Path(path).read_bytes())


# --- report rendering -------------------------------------------------------

REPORT_CSV_COLUMNS = ("name", "stage", "mean_ms", "median_ms", "stddev_ms",
                      "bytes_persistent", "bytes_transient")
MEMORY_CSV_COLUMNS = ("layer", "stage", "bytes_persistent", "bytes_transient",
                      "bytes_peak")


def report_json(report_dict: dict) -> str:
    return json.dumps(report_dict, indent=2) + "\n"


def report_csv(report_dict: dict) -> str:
    """One row per (layer, stage) of a single profile report."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(REPORT_CSV_COLUMNS)
    for row in report_dict["layers"]:
        writer.writerow([row[col] for col in REPORT_CSV_COLUMNS])
    return buf.getvalue()


def reports_csv(report_dicts: list[dict], key_field: str) -> str:
    """Concatenated sweep reports; the sweep variable leads each row."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow((key_field,) + REPORT_CSV_COLUMNS)
    for report in report_dicts:
        key = report["metadata"][key_field]
        for row in report["layers"]:
            writer.writerow([key] + [row[col] for col in REPORT_CSV_COLUMNS])
    return buf.getvalue()


def memory_csv(mem_dict: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(MEMORY_CSV_COLUMNS)
    for row in mem_dict["rows"]:
        writer.writerow([row[col] for col in MEMORY_CSV_COLUMNS])
    return buf.getvalue()


def infer_csv(result: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(("class", "log_prob", "predicted"))
    for cls, lp in enumerate(result["log_probs"]):
        writer.writerow((cls, lp, int(cls == result["class_index"])))
    return buf.getvalue()
