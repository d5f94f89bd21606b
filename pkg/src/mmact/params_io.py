"""Parameter serialization in the MMW1 container format.

Layout: magic b"MMW1", little-endian u32 header length, UTF-8 JSON header,
then a flat little-endian float32 payload. The header lists entry names,
shapes, and byte offsets into the payload, in file order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MMW1"


class ParamFormatError(ValueError):
    pass


def write_mmw1(path, entries: list[tuple[str, np.ndarray]]) -> None:
    """Write named arrays. Order is preserved; values are stored as float32."""
    header_entries = []
    payload = bytearray()
    for name, arr in entries:
        arr = np.ascontiguousarray(np.asarray(arr), dtype="<f4")
        header_entries.append({"name": name, "shape": list(arr.shape), "offset": len(payload)})
        payload.extend(arr.tobytes())
    header = json.dumps({"format": "MMW1", "entries": header_entries}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(bytes(payload))


def read_mmw1(path) -> dict[str, np.ndarray]:
    """Read back a name -> float32 array mapping."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ParamFormatError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < 8:
        raise ParamFormatError(f"{path}: truncated header")
    (header_len,) = struct.unpack("<I", data[4:8])
    header_end = 8 + header_len
    if len(data) < header_end:
        raise ParamFormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[8:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParamFormatError(f"{path}: unreadable header: {exc}") from exc
    payload = data[header_end:]
    out: dict[str, np.ndarray] = {}
    for entry in header["entries"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + 4 * count
        if end > len(payload):
            raise ParamFormatError(f"{path}: truncated payload for entry {entry['name']!r}")
        arr = np.frombuffer(payload[start:end], dtype="<f4").reshape(shape)
        out[entry["name"]] = arr.copy()
    return out
