"""Bit-exact binary serialization of named float32 tensors.

File layout, all integers little-endian:

    magic "AGWT" | version u32 | tensor count u32
    per tensor: name length u16 | name UTF-8 | rank u8 | dims u32[rank] | payload f32
    metadata length u32 | metadata UTF-8
    CRC32 (IEEE) u32 over all preceding bytes

Loads validate structure before touching the payload and verify the CRC before
building any array, so a corrupt file never yields a partial result.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from ..errors import (CheckpointCrcError, CheckpointMagicError,
                      CheckpointTruncatedError, CheckpointVersionError,
                      ConfigurationError)

MAGIC = b"AGWT"
VERSION = 1


def save_checkpoint(tensors: dict[str, np.ndarray], metadata: str = "") -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        if not name:
            raise ConfigurationError("tensor names must be non-empty")
        nb = name.encode("utf-8")
        if len(nb) > 0xFFFF:
            raise ConfigurationError(f"tensor name too long: {name[:32]}...")
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if arr.ndim > 0xFF:
            raise ConfigurationError(f"tensor rank {arr.ndim} exceeds format limit")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    mb = metadata.encode("utf-8")
    parts.append(struct.pack("<I", len(mb)))
    parts.append(mb)
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointTruncatedError(
                f"need {n} bytes at offset {self.pos}, file has {len(self.data)}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self):
        return self.take(1)[0]

    def u16(self):
        return struct.unpack("<H", self.take(2))[0]

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(data: bytes) -> tuple[dict[str, np.ndarray], str]:
    if len(data) < 4 or data[:4] != MAGIC:
        raise CheckpointMagicError("bad magic")
    r = _Reader(data)
    r.take(4)
    version = r.u32()
    if version != VERSION:
        raise CheckpointVersionError(f"format version {version}, expected {VERSION}")
    count = r.u32()

    # structural pass: offsets only, bounds-checked, nothing decoded or
    # allocated until the CRC has been verified
    entries = []
    for _ in range(count):
        nlen = r.u16()
        name_off = r.pos
        r.take(nlen)
        rank = r.u8()
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        n_elems = 1
        for d in dims:
            n_elems *= d
        payload_off = r.pos
        r.take(4 * n_elems)
        entries.append((name_off, nlen, dims, payload_off, n_elems))
    mlen = r.u32()
    meta_off = r.pos
    r.take(mlen)
    crc_declared = r.u32()
    if r.pos != len(data):
        raise CheckpointTruncatedError(f"{len(data) - r.pos} trailing bytes after CRC")

    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != crc_declared:
        raise CheckpointCrcError("CRC mismatch")

    tensors: dict[str, np.ndarray] = {}
    for name_off, nlen, dims, off, n_elems in entries:
        name = data[name_off:name_off + nlen].decode("utf-8")
        arr = np.frombuffer(data, dtype="<f4", count=n_elems, offset=off)
        tensors[name] = arr.reshape(dims).astype(np.float32, copy=True)
    metadata = data[meta_off:meta_off + mlen].decode("utf-8")
    return tensors, metadata


def save_checkpoint_file(path, tensors: dict[str, np.ndarray], metadata: str = "") -> None:
    with open(path, "wb") as f:
        f.write(save_checkpoint(tensors, metadata))


def load_checkpoint_file(path) -> tuple[dict[str, np.ndarray], str]:
    with open(path, "rb") as f:
        return load_checkpoint(f.read())
