"""Binary container used by every saved artifact (vectors, encoders, models).

Layout (all integers little-endian):

    magic      6 bytes   artifact-specific tag, e.g. b"NLEMB\\x00"
    version    uint16    format version
    cfg_len    uint32    length of the UTF-8 JSON config block
    config     cfg_len bytes
    n_arrays   uint16
    then per array:
        name_len  uint16, name bytes (UTF-8)
        ndim      uint8, dims as uint32 each
        data      float32 little-endian, C order

A trailing uint32 holds the CRC32 of everything before it, so truncated or
corrupted files fail loudly instead of loading garbage weights.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from pathlib import Path

import numpy as np


class ContainerError(ValueError):
    """Raised for unreadable, corrupted, or version-incompatible files."""


def write_container(
    path: str | Path,
    magic: bytes,
    version: int,
    config: dict,
    arrays: dict[str, np.ndarray],
) -> None:
    if len(magic) != 6:
        raise ContainerError("magic must be exactly 6 bytes")
    buf = io.BytesIO()
    buf.write(magic)
    buf.write(struct.pack("<H", version))
    cfg = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf.write(struct.pack("<I", len(cfg)))
    buf.write(cfg)
    buf.write(struct.pack("<H", len(arrays)))
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        name_b = name.encode("utf-8")
        buf.write(struct.pack("<H", len(name_b)))
        buf.write(name_b)
        buf.write(struct.pack("<B", data.ndim))
        for dim in data.shape:
            buf.write(struct.pack("<I", dim))
        buf.write(data.tobytes())
    payload = buf.getvalue()
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    Path(path).write_bytes(payload + struct.pack("<I", crc))


def read_container(
    path: str | Path, magic: bytes, version: int
) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise ContainerError(f"{path}: file too short to be a valid container")
    payload, crc_bytes = raw[:-4], raw[-4:]
    if zlib.crc32(payload) & 0xFFFFFFFF != struct.unpack("<I", crc_bytes)[0]:
        raise ContainerError(f"{path}: checksum mismatch (truncated or corrupted file)")
    buf = io.BytesIO(payload)
    got_magic = buf.read(6)
    if got_magic != magic:
        raise ContainerError(
            f"{path}: wrong magic {got_magic!r}, expected {magic!r}"
        )
    (got_version,) = struct.unpack("<H", buf.read(2))
    if got_version != version:
        raise ContainerError(
            f"{path}: format version {got_version}, this build reads {version}"
        )
    (cfg_len,) = struct.unpack("<I", buf.read(4))
    config = json.loads(buf.read(cfg_len).decode("utf-8"))
    (n_arrays,) = struct.unpack("<H", buf.read(2))
    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_arrays):
        (name_len,) = struct.unpack("<H", buf.read(2))
        name = buf.read(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", buf.read(1))
        shape = struct.unpack(f"<{ndim}I", buf.read(4 * ndim))
        count = int(np.prod(shape)) if shape else 1
        data = buf.read(4 * count)
        if len(data) != 4 * count:
            raise ContainerError(f"{path}: array {name!r} is truncated")
        arrays[name] = np.frombuffer(data, dtype="<f4").reshape(shape).copy()
    return config, arrays
