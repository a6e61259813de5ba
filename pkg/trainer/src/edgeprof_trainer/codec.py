"""PCF/ECW file codecs (trainer-side implementation).

Same wire formats as the inference engine publishes, implemented
independently here: PCF v1 is ``PCF1`` | u32 n | u32 c | i32 label |
n*c float32; ECW v1 is ``ECW1`` | u32 count | per tensor u16 name_len,
name, u8 rank, rank x u32 dims, float32 payload; all little-endian,
tensors in ascending name order.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

PCF_MAGIC = b"PCF1"
ECW_MAGIC = b"ECW1"


class CodecError(ValueError):
    pass


def _need(buf: bytes, offset: int, count: int, what: str) -> int:
    if offset + count > len(buf):
        raise CodecError(f"truncated {what} at offset {offset}")
    return offset + count


def write_pcf(path: str | Path, points: np.ndarray, label: int | None = None) -> None:
    points = np.ascontiguousarray(points, dtype="<f4")
    if points.ndim != 2:
        raise CodecError(f"points must be 2-D, got shape {points.shape}")
    n, c = points.shape
    header = PCF_MAGIC + struct.pack("<IIi", n, c, -1 if label is None else int(label))
    Path(path).write_bytes(header + points.tobytes())


def read_pcf(path: str | Path) -> tuple[np.ndarray, int | None]:
    buf = Path(path).read_bytes()
    offset = _need(buf, 0, 4, "magic")
    if buf[:4] != PCF_MAGIC:
        raise CodecError(f"not a PCF file: magic {buf[:4]!r}")
    end = _need(buf, offset, 12, "header")
    n, c, label = struct.unpack("<IIi", buf[offset:end])
    offset = end
    end = _need(buf, offset, 4 * n * c, "payload")
    points = np.frombuffer(buf[offset:end], dtype="<f4").reshape(n, c)
    # astype copies: callers get a writable array, not the frombuffer view
    return points.astype(np.float32), None if label < 0 else label


def write_ecw(path: str | Path, tensors: Mapping[str, np.ndarray]) -> None:
    out = bytearray(ECW_MAGIC)
    out += struct.pack("<I", len(tensors))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded)) + encoded
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    Path(path).write_bytes(bytes(out))


def read_ecw(path: str | Path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    offset = _need(buf, 0, 4, "magic")
    if buf[:4] != ECW_MAGIC:
        raise CodecError(f"not an ECW file: magic {buf[:4]!r}")
    end = _need(buf, offset, 4, "tensor count")
    (count,) = struct.unpack("<I", buf[offset:end])
    offset = end
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        end = _need(buf, offset, 2, "name length")
        (name_len,) = struct.unpack("<H", buf[offset:end])
        offset = end
        end = _need(buf, offset, name_len, "name")
        name = buf[offset:end].decode("utf-8")
        offset = end
        end = _need(buf, offset, 1, "rank")
        rank = buf[offset]
        offset = end
        end = _need(buf, offset, 4 * rank, "dims")
        dims = struct.unpack(f"<{rank}I", buf[offset:end])
        offset = end
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        end = _need(buf, offset, 4 * size, f"payload of {name}")
        arr = np.frombuffer(buf[offset:end], dtype="<f4").reshape(dims)
        tensors[name] = arr.astype(np.float32)
        offset = end
    return tensors
