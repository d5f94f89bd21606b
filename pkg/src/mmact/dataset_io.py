"""Dataset serialization: per-sequence VAD1 binaries plus manifest.jsonl.

VAD1 layout (all integers and floats little-endian):
    magic  b"VAD1"
    u32    T (frames)
    u32    M (feature modality count)
    u32*M  per-modality feature dims
    f32    M blocks of T*dim feature values (row-major)
    f32    T steering values, then T speed values
    u32    onset frame

The manifest holds one JSON record per sequence with the metadata that is
not in the binary (scenario, class, condition tags, fps, file name).
Round-tripping a dataset is bit-exact because all payloads are float32.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .datagen import Sequence

MAGIC = b"VAD1"


class DatasetFormatError(ValueError):
    pass


class MagicError(DatasetFormatError):
    pass


class TruncatedError(DatasetFormatError):
    pass


class ManifestMismatchError(DatasetFormatError):
    pass


def sequence_to_bytes(seq: Sequence) -> bytes:
    out = bytearray()
    out += MAGIC
    out += struct.pack("<II", seq.frames, len(seq.modality_features))
    for feats in seq.modality_features:
        out += struct.pack("<I", feats.shape[1])
    for feats in seq.modality_features:
        out += np.ascontiguousarray(feats, dtype="<f4").tobytes()
    out += np.ascontiguousarray(seq.raw_steering, dtype="<f4").tobytes()
    out += np.ascontiguousarray(seq.raw_speed, dtype="<f4").tobytes()
    out += struct.pack("<I", seq.onset_frame)
    return bytes(out)


def write_dataset(sequences: list[Sequence], directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "manifest.jsonl", "w", encoding="utf-8") as manifest:
        for seq in sequences:
            fname = f"{seq.id}.vad1"
            (directory / fname).write_bytes(sequence_to_bytes(seq))
            record = {
                "id": seq.id,
                "scenario": seq.scenario,
                "class": seq.class_label,
                "daytime": seq.daytime,
                "weather": seq.weather,
                "user": seq.user,
                "fps": seq.fps,
                "frames": seq.frames,
                "file": fname,
            }
            manifest.write(json.dumps(record) + "\n")


def _read_exact(data: bytes, offset: int, count: int, path, what: str) -> bytes:
    if offset + count > len(data):
        raise TruncatedError(f"{path}: truncated file while reading {what}")
    return data[offset:offset + count]


def read_sequence_file(path, record: dict) -> Sequence:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise MagicError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    off = 4
    frames, n_mod = struct.unpack("<II", _read_exact(data, off, 8, path, "header"))
    off += 8
    dims = []
    for _ in range(n_mod):
        (d,) = struct.unpack("<I", _read_exact(data, off, 4, path, "dims"))
        dims.append(d)
        off += 4
    feats = []
    for d in dims:
        raw = _read_exact(data, off, 4 * frames * d, path, "features")
        feats.append(np.frombuffer(raw, dtype="<f4").reshape(frames, d).copy())
        off += 4 * frames * d
    steering = np.frombuffer(_read_exact(data, off, 4 * frames, path, "steering"), dtype="<f4").copy()
    off += 4 * frames
    speed = np.frombuffer(_read_exact(data, off, 4 * frames, path, "speed"), dtype="<f4").copy()
    off += 4 * frames
    (onset,) = struct.unpack("<I", _read_exact(data, off, 4, path, "onset"))

    if record["frames"] != frames:
        raise ManifestMismatchError(
            f"{path}: manifest says {record['frames']} frames, file has {frames}"
        )
    return Sequence(
        id=record["id"],
        scenario=record["scenario"],
        class_label=int(record["class"]),
        frames=frames,
        fps=float(record["fps"]),
        modality_features=feats,
        raw_steering=steering,
        raw_speed=speed,
        onset_frame=int(onset),
        daytime=record["daytime"],
        weather=record["weather"],
        user=record["user"],
    )


def read_dataset(directory) -> list[Sequence]:
    directory = Path(directory)
    manifest = directory / "manifest.jsonl"
    if not manifest.exists():
        raise DatasetFormatError(f"{directory}: missing manifest.jsonl")
    sequences = []
    for line in manifest.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        sequences.append(read_sequence_file(directory / record["file"], record))
    return sequences
