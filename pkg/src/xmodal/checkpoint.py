"""Binary checkpoint files (magic ``XMCK``).

Layout, all integers little-endian:

  magic "XMCK" | u32 format version | u32 meta length | meta JSON (utf-8)
  u32 net count
    per net: u16 name length | name | u32 layer count
      per layer: u32 rows | u32 cols | rows*cols f64 weights (row-major) | cols f64 biases
  u32 extra array count
    per array: u16 name length | name | u32 ndim | ndim * u32 dims | f64 data

The meta JSON holds the model header (view names, dims) plus whatever the
caller stores (epoch counters, config hash). Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import CorruptFileError, FormatError, VersionError

XMCK_MAGIC = b"XMCK"
XMCK_VERSION = 1


def _pack_name(name: str) -> bytes:
    raw = name.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def _pack_matrix(m: np.ndarray) -> bytes:
    rows, cols = m.shape
    return struct.pack("<II", rows, cols) + np.ascontiguousarray(m, dtype="<f8").tobytes()


def save_checkpoint(path, nets: dict, extra_arrays: dict, meta: dict) -> None:
    """Write named nets (.weights/.biases lists), named arrays and metadata."""
    chunks = [XMCK_MAGIC, struct.pack("<I", XMCK_VERSION)]
    meta_raw = json.dumps(meta, sort_keys=True).encode("utf-8")
    chunks.append(struct.pack("<I", len(meta_raw)))
    chunks.append(meta_raw)
    chunks.append(struct.pack("<I", len(nets)))
    for name, net in nets.items():
        chunks.append(_pack_name(name))
        chunks.append(struct.pack("<I", net.num_layers))
        for w, b in zip(net.weights, net.biases):
            chunks.append(_pack_matrix(w))
            chunks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    chunks.append(struct.pack("<I", len(extra_arrays)))
    for name, arr in extra_arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        chunks.append(_pack_name(name))
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw = raw
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CorruptFileError(f"{self.path}: truncated checkpoint")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def name(self) -> str:
        return self.take(self.u16()).decode("utf-8")

    def f64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").copy()


def load_checkpoint(path):
    """Read a checkpoint; returns (net layer data, extra arrays, meta).

    Net data comes back as {name: (weights list, biases list)} so the caller
    can rebuild whatever network class it uses.
    """
    raw = open(path, "rb").read()
    r = _Reader(raw, path)
    if r.take(4) != XMCK_MAGIC:
        raise FormatError(f"{path}: not a checkpoint file (bad magic)")
    version = r.u32()
    if version != XMCK_VERSION:
        raise VersionError(
            f"{path}: checkpoint format version {version} not supported "
            f"(this build reads version {XMCK_VERSION})"
        )
    meta = json.loads(r.take(r.u32()).decode("utf-8"))
    nets = {}
    for _ in range(r.u32()):
        name = r.name()
        weights, biases = [], []
        for _ in range(r.u32()):
            rows, cols = r.u32(), r.u32()
            weights.append(r.f64(rows * cols).reshape(rows, cols))
            biases.append(r.f64(cols))
        nets[name] = (weights, biases)
    extra = {}
    for _ in range(r.u32()):
        name = r.name()
        ndim = r.u32()
        shape = tuple(r.u32() for _ in range(ndim))
        extra[name] = r.f64(int(np.prod(shape)) if shape else 1).reshape(shape)
    if r.pos != len(raw):
        raise CorruptFileError(f"{path}: {len(raw) - r.pos} trailing bytes after payload")
    return nets, extra, meta
