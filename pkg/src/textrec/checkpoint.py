"""Binary named-tensor container.

Layout (all integers little-endian):

    magic   4 bytes  b"FACL"
    version u32      currently 1
    count   u32      number of tensors
    per tensor:
        name_len u16, name UTF-8 bytes
        rank     u8  (0..4)
        extents  rank x u64
        data     prod(extents) x f64
    crc     u32      CRC32 of every byte between the magic and the checksum

Save/load round trips are bitwise; the checksum is validated on load.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

__all__ = ["save_tensors", "load_tensors", "CheckpointError", "MAGIC", "VERSION"]

MAGIC = b"FACL"
VERSION = 1
MAX_RANK = 4


class CheckpointError(ValueError):
    """Malformed or corrupt checkpoint file."""


def save_tensors(path, tensors: dict) -> None:
    """Write named float64 arrays in insertion order."""
    chunks = [struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim > 0:
            arr = np.ascontiguousarray(arr)  # keep 0-d scalars rank 0
        if arr.ndim > MAX_RANK:
            raise CheckpointError(f"tensor '{name}' has rank {arr.ndim} > {MAX_RANK}")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.astype("<f8").tobytes())
    payload = b"".join(chunks)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(payload)
        fh.write(struct.pack("<I", crc))


def load_tensors(path) -> dict:
    """Read a container back into an ordered name -> float64 array dict."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < len(MAGIC) + 12 or blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    payload, crc_bytes = blob[4:-4], blob[-4:]
    (crc_stored,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(payload) & 0xFFFFFFFF != crc_stored:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupt")
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(payload):
            raise CheckpointError(f"{path}: truncated payload")
        out = payload[pos : pos + n]
        pos += n
        return out

    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    tensors: dict = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        if rank > MAX_RANK:
            raise CheckpointError(f"{path}: tensor '{name}' has rank {rank}")
        shape = struct.unpack(f"<{rank}Q", take(8 * rank))
        n_items = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(take(8 * n_items), dtype="<f8")
        tensors[name] = data.reshape(shape).copy()
    if pos != len(payload):
        raise CheckpointError(f"{path}: {len(payload) - pos} trailing bytes")
    return tensors
