"""Writers/readers for the engine's binary containers.

Implemented against the documented formats (see the engine README):
little-endian throughout, float32 row-major payloads.

VTRW: "VTRW", u32 version=1, 11 u32 config fields, u32 tensor count,
per-tensor directory entry (u16 name length, utf-8 name, u32 rank,
rank x u32 dims, u64 payload offset), u64 payload size, payload.

VTRT: "VTRT", u32 rank, rank x u32 dims, u32 dtype tag (0 = f32),
payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

CONFIG_FIELDS = (
    "image_h",
    "image_w",
    "channels",
    "patch",
    "shifts",
    "shift_px",
    "dim",
    "depth",
    "heads",
    "mlp_ratio",
    "num_classes",
)
_F32LE = np.dtype("<f4")


def write_vtrw(path, config: dict, tensors) -> None:
    """tensors: iterable of (name, array-like) in directory order."""
    header = bytearray(b"VTRW")
    header += struct.pack("<I", 1)
    header += struct.pack("<11I", *(int(config[f]) for f in CONFIG_FIELDS))
    items = [(name, np.asarray(t, dtype=np.float32, order="C")) for name, t in tensors]
    header += struct.pack("<I", len(items))
    payload = bytearray()
    for name, arr in items:
        enc = name.encode("utf-8")
        header += struct.pack("<H", len(enc)) + enc
        header += struct.pack("<I", arr.ndim)
        header += struct.pack(f"<{arr.ndim}I", *arr.shape)
        header += struct.pack("<Q", len(payload))
        payload += arr.astype(_F32LE).tobytes()
    header += struct.pack("<Q", len(payload))
    Path(path).write_bytes(bytes(header) + bytes(payload))


def read_vtrw(path) -> tuple[dict, dict]:
    """Returns (config dict, name -> array). Minimal validation only."""
    data = Path(path).read_bytes()
    if data[:4] != b"VTRW":
        raise ValueError(f"{path}: not a VTRW file")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != 1:
        raise ValueError(f"{path}: unsupported version {version}")
    vals = struct.unpack_from("<11I", data, 8)
    config = dict(zip(CONFIG_FIELDS, vals))
    pos = 8 + 44
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    entries = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<I", data, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        (offset,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        entries.append((name, dims, offset))
    (payload_size,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    payload = data[pos : pos + payload_size]
    if len(payload) < payload_size:
        raise ValueError(f"{path}: truncated payload")
    tensors = {}
    for name, dims, offset in entries:
        n = int(np.prod(dims, dtype=np.int64)) if dims else 1
        arr = np.frombuffer(payload, dtype=_F32LE, count=n, offset=offset)
        tensors[name] = arr.reshape(dims).astype(np.float32)
    return config, tensors


def write_vtrt(path, arr) -> None:
    arr = np.asarray(arr, dtype=np.float32, order="C")
    out = bytearray(b"VTRT")
    out += struct.pack("<I", arr.ndim)
    out += struct.pack(f"<{arr.ndim}I", *arr.shape)
    out += struct.pack("<I", 0)
    out += arr.astype(_F32LE).tobytes()
    Path(path).write_bytes(bytes(out))


def read_vtrt(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != b"VTRT":
        raise ValueError(f"{path}: not a VTRT file")
    (rank,) = struct.unpack_from("<I", data, 4)
    dims = struct.unpack_from(f"<{rank}I", data, 8)
    (tag,) = struct.unpack_from("<I", data, 8 + 4 * rank)
    if tag != 0:
        raise ValueError(f"{path}: unsupported dtype tag {tag}")
    n = int(np.prod(dims, dtype=np.int64)) if dims else 1
    arr = np.frombuffer(data, dtype=_F32LE, count=n, offset=12 + 4 * rank)
    return arr.reshape(dims).astype(np.float32)
