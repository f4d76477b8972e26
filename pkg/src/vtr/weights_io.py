"""Binary containers shared between the engine and external tooling.

VTRW (weights): magic "VTRW", u32 version, the full model config as
eleven little-endian u32 fields (image_h, image_w, channels, patch,
shifts, shift_px, dim, depth, heads, mlp_ratio, num_classes), a tensor
directory (u32 count; per entry u16 name length, utf-8 name, u32 rank,
u32 dims, u64 byte offset into the payload), a u64 payload size, then
the payload of little-endian float32 values, row-major. Directory names
are exactly the canonical WeightSet tensor names; entries are contiguous
with no gaps or overlaps.

VTRT (tensors/images): magic "VTRT", u32 rank, u32 dims, u32 dtype tag
(0 = float32), payload of little-endian float32, row-major.

Also here: the fixture manifest (JSON), PGM image loading, and the
deterministic random initializer.

Everything is little-endian regardless of host byte order.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import (
    BadDirectoryError,
    BadMagicError,
    BadVersionError,
    FormatError,
    TruncatedError,
)
from .model import VtrConfig, WeightSet, expected_shapes, weightset_from_tensors

VTRW_MAGIC = b"VTRW"
VTRT_MAGIC = b"VTRT"
VTRW_VERSION = 1
_DTYPE_F32 = 0
_F32LE = np.dtype("<f4")

_CONFIG_FIELDS = (
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


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedError(f"{self.path}: needed {n} bytes at offset {self.pos}, file ends")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def save_weights(w: WeightSet, cfg: VtrConfig, path) -> None:
    """Write a VTRW container; load_weights round-trips it bit-exactly."""
    tensors = list(w.named_tensors())
    header = bytearray()
    header += VTRW_MAGIC
    header += struct.pack("<I", VTRW_VERSION)
    header += struct.pack("<11I", *(getattr(cfg, f) for f in _CONFIG_FIELDS))
    header += struct.pack("<I", len(tensors))
    payload = bytearray()
    for name, arr in tensors:
        arr = np.asarray(arr, dtype=np.float32, order="C")
        encoded = name.encode("utf-8")
        header += struct.pack("<H", len(encoded))
        header += encoded
        header += struct.pack("<I", arr.ndim)
        header += struct.pack(f"<{arr.ndim}I", *arr.shape)
        header += struct.pack("<Q", len(payload))
        payload += arr.astype(_F32LE).tobytes()
    header += struct.pack("<Q", len(payload))
    Path(path).write_bytes(bytes(header) + bytes(payload))


def load_weights(path) -> tuple[WeightSet, VtrConfig]:
    """Read a VTRW container, validating magic, version, directory and payload."""
    r = _Reader(Path(path).read_bytes(), path)
    if r.take(4) != VTRW_MAGIC:
        raise BadMagicError(f"{path}: not a VTRW file")
    version = r.u32()
    if version != VTRW_VERSION:
        raise BadVersionError(f"{path}: unsupported VTRW version {version}")
    cfg = VtrConfig(**{f: r.u32() for f in _CONFIG_FIELDS})
    count = r.u32()
    entries = []
    for _ in range(count):
        name = r.take(r.u16()).decode("utf-8")
        rank = r.u32()
        dims = tuple(r.u32() for _ in range(rank))
        offset = r.u64()
        entries.append((name, dims, offset))
    payload_size = r.u64()
    payload = r.take(payload_size)
    if r.pos != len(r.data):
        raise FormatError(f"{path}: {len(r.data) - r.pos} trailing bytes after payload")

    shapes = expected_shapes(cfg)
    names = [e[0] for e in entries]
    if sorted(names) != sorted(shapes):
        raise BadDirectoryError(f"{path}: directory names do not match the config's tensor set")
    expected_offset = 0
    tensors = {}
    for name, dims, offset in sorted(entries, key=lambda e: e[2]):
        if dims != shapes[name]:
            raise BadDirectoryError(f"{path}: {name} has dims {dims}, expected {shapes[name]}")
        if offset != expected_offset:
            raise BadDirectoryError(f"{path}: {name} at offset {offset} leaves a gap or overlap")
        nbytes = int(math.prod(dims)) * 4
        if offset + nbytes > payload_size:
            raise TruncatedError(f"{path}: payload ends inside {name}")
        tensors[name] = np.frombuffer(payload, dtype=_F32LE, count=math.prod(dims), offset=offset).reshape(dims).astype(np.float32)
        expected_offset = offset + nbytes
    if expected_offset != payload_size:
        raise BadDirectoryError(f"{path}: payload has {payload_size - expected_offset} unclaimed bytes")
    return weightset_from_tensors(cfg, tensors), cfg


def save_tensor(arr, path) -> None:
    """Write one array as a VTRT container."""
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    out = bytearray()
    out += VTRT_MAGIC
    out += struct.pack("<I", arr.ndim)
    out += struct.pack(f"<{arr.ndim}I", *arr.shape)
    out += struct.pack("<I", _DTYPE_F32)
    out += arr.astype(_F32LE).tobytes()
    Path(path).write_bytes(bytes(out))


def load_tensor(path) -> np.ndarray:
    r = _Reader(Path(path).read_bytes(), path)
    if r.take(4) != VTRT_MAGIC:
        raise BadMagicError(f"{path}: not a VTRT file")
    rank = r.u32()
    dims = tuple(r.u32() for _ in range(rank))
    tag = r.u32()
    if tag != _DTYPE_F32:
        raise FormatError(f"{path}: unsupported dtype tag {tag}")
    n = int(math.prod(dims)) if rank else 1
    payload = r.take(n * 4)
    if r.pos != len(r.data):
        raise FormatError(f"{path}: {len(r.data) - r.pos} trailing bytes")
    return np.frombuffer(payload, dtype=_F32LE, count=n).reshape(dims).astype(np.float32)


def load_pgm(path) -> np.ndarray:
    """Binary PGM (P5), 8 or 16 bit big-endian, scaled to [0, 1] by maxval."""
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise BadMagicError(f"{path}: only binary (P5) PGM is supported")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TruncatedError(f"{path}: header ends early")
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if not 0 < maxval < 65536:
        raise FormatError(f"{path}: bad maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = width * height
    raw = data[pos : pos + n * dtype.itemsize]
    if len(raw) < n * dtype.itemsize:
        raise TruncatedError(f"{path}: expected {n} samples, payload short")
    img = np.frombuffer(raw, dtype=dtype).reshape(height, width)
    return (img.astype(np.float32) / np.float32(maxval))[:, :, None]


def load_image(path) -> np.ndarray:
    """Load an (H, W, C) float32 image from a VTRT or PGM file."""
    path = Path(path)
    head = path.read_bytes()[:4] if path.exists() else b""
    if head[:2] == b"P5" or path.suffix.lower() == ".pgm":
        return load_pgm(path)
    arr = load_tensor(path)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise FormatError(f"{path}: image tensor must have rank 2 or 3, got {arr.ndim}")
    return arr


def random_init(cfg: VtrConfig, seed: int) -> WeightSet:
    """Deterministic random weights for a config.

    Matrices and the class token draw from a +/-2 sigma truncated normal
    (std 0.02) via inverse-CDF over a PCG64 stream; biases, layer-norm
    betas and positional embeddings are zero; gammas are one; every layer
    temperature starts at sqrt(head_dim).
    """
    rng = np.random.default_rng(np.uint64(seed))
    lo, hi = ndtr(-2.0), ndtr(2.0)
    tensors = {}
    for name, shape in expected_shapes(cfg).items():
        if name.endswith(".temperature"):
            tensors[name] = np.float32(math.sqrt(cfg.head_dim))
        elif name.endswith(".gamma"):
            tensors[name] = np.ones(shape, dtype=np.float32)
        elif name == "pos_embed" or name.endswith((".beta", ".bias", ".bq", ".bk", ".bv", ".b1", ".b2")):
            tensors[name] = np.zeros(shape, dtype=np.float32)
        else:
            u = rng.random(shape)
            tensors[name] = (ndtri(lo + u * (hi - lo)) * 0.02).astype(np.float32)
    return weightset_from_tensors(cfg, tensors)


@dataclass(frozen=True)
class FixtureSample:
    image: Path
    expected_class: int
    traces: dict[str, Path]


@dataclass(frozen=True)
class FixtureManifest:
    weights: Path
    tolerance_rel: float
    samples: list[FixtureSample]


def load_manifest(path) -> FixtureManifest:
    """Read and validate a fixture manifest; every referenced path must exist."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON: {e}") from e
    base = path.parent
    try:
        weights = base / doc["weights"]
        tol = float(doc.get("tolerance_rel", 1e-4))
        samples = [
            FixtureSample(
                image=base / s["image"],
                expected_class=int(s["expected_class"]),
                traces={k: base / v for k, v in s.get("traces", {}).items()},
            )
            for s in doc["samples"]
        ]
    except (KeyError, TypeError) as e:
        raise FormatError(f"{path}: manifest missing required field: {e}") from e
    missing = [p for p in [weights] + [s.image for s in samples] if not p.exists()]
    for s in samples:
        missing += [p for p in s.traces.values() if not p.exists()]
    if missing:
        raise FormatError(f"{path}: dangling fixture paths: {[str(p) for p in missing[:4]]}")
    return FixtureManifest(weights, tol, samples)


def write_trace_bundle(dirpath, trace: dict) -> dict[str, Path]:
    """Write each stage matrix as <stage>.vtrt inside dirpath."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    written = {}
    for stage, arr in trace.items():
        p = dirpath / f"{stage}.vtrt"
        save_tensor(np.atleast_2d(arr), p)
        written[stage] = p
    return written


def read_trace_bundle(dirpath) -> dict[str, np.ndarray]:
    dirpath = Path(dirpath)
    out = {}
    for p in sorted(dirpath.glob("*.vtrt")):
        out[p.name[: -len(".vtrt")]] = load_tensor(p)
    return out
