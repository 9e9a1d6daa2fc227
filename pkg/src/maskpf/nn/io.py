"""Model file format.

Layout: 4-byte magic "MPF1", a little-endian uint32 header length, a JSON
header, then the raw tensor payloads as little-endian float32 in exactly
the order the header declares. The header carries the estimator kind, the
training config, the feature normalization stats' tensor names, and one
(name, shape) entry per tensor. Keys are sorted and no timestamps are
stored, so saving the same trained model twice yields identical bytes.

In memory everything is float64; the file stores float32, which is plenty
for inference and keeps files half the size.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from ..dsp import NormStats
from ..errors import DataError
from .models import Model, build_model
from .train import TrainConfig

MAGIC = b"MPF1"
FORMAT_VERSION = 1


def save_model(path: str, model: Model, stats: NormStats,
               config: TrainConfig) -> None:
    tensors: list[tuple[str, np.ndarray]] = list(model.state().items())
    tensors.append(("norm.mean", stats.mean))
    tensors.append(("norm.std", stats.std))
    header = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "context_frames": model.context_frames,
        "train_config": config.to_dict(),
        "tensors": [
            {"name": name, "shape": list(arr.shape)} for name, arr in tensors
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_model(path: str) -> tuple[Model, NormStats, dict]:
    """Rebuild the estimator, its weights, and its feature stats."""
    if not os.path.isfile(path):
        raise DataError(f"no such model file: {path}")
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise DataError(f"{path}: not a model file (bad magic)")
    if len(raw) < 8:
        raise DataError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + hlen:
        raise DataError(f"{path}: truncated header")
    try:
        header = json.loads(raw[8 : 8 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: unreadable header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version")

    offset = 8 + hlen
    values: dict[str, np.ndarray] = {}
    for decl in header["tensors"]:
        shape = tuple(decl["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = 4 * count
        if offset + nbytes > len(raw):
            raise DataError(f"{path}: payload shorter than declared tensors")
        flat = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        values[decl["name"]] = flat.astype(np.float64).reshape(shape)
        offset += nbytes
    if offset != len(raw):
        raise DataError(f"{path}: {len(raw) - offset} trailing bytes")

    try:
        config = TrainConfig(**header["train_config"])
    except TypeError as exc:
        raise DataError(f"{path}: bad train_config: {exc}") from exc
    model = build_model(header["kind"], config.seed)
    mean = values.pop("norm.mean", None)
    std = values.pop("norm.std", None)
    if mean is None or std is None:
        raise DataError(f"{path}: missing normalization tensors")
    model.load_state(values)
    return model, NormStats(mean, std), header
