"""Versioned parameter checkpoints.

Layout (little-endian)::

    magic b"MPAK" | u32 version (=1) | u32 header length | header (UTF-8 JSON)
    | raw tensor bytes, concatenated in header order

The JSON header holds ``model_config`` (every ModelConfig field), ``meta`` (free
form, e.g. training step and validation loss) and ``tensors``: a list of
``{"name", "dtype", "shape"}`` entries. Tensor payloads are C-ordered with the
listed numpy dtype. The format has no timestamps, so saving the same
parameters twice gives identical bytes.
"""
from __future__ import annotations

import dataclasses
import json
import os
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import torch

from .predictor import ModelConfig, MotionPredictor

MAGIC = b"MPAK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(model: MotionPredictor, meta: Optional[Dict[str, Any]] = None) -> bytes:
    tensors = []
    blobs = []
    for name, tensor in model.state_dict().items():
        arr = tensor.detach().cpu().numpy()
        arr = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
        tensors.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = json.dumps(
        {"model_config": dataclasses.asdict(model.config), "meta": meta or {}, "tensors": tensors},
        sort_keys=True,
    ).encode("utf-8")
    return MAGIC + struct.pack("<II", VERSION, len(header)) + header + b"".join(blobs)


def loads(data: bytes) -> Tuple[MotionPredictor, Dict[str, Any]]:
    if data[:4] != MAGIC:
        raise CheckpointError(f"not a checkpoint (magic {data[:4]!r})")
    if len(data) < 12:
        raise CheckpointError("truncated checkpoint")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(data[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    model = MotionPredictor(ModelConfig(**header["model_config"]))
    pos = 12 + hlen
    state = {}
    for entry in header["tensors"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        nbytes = count * dtype.itemsize
        if pos + nbytes > len(data):
            raise CheckpointError(f"truncated tensor {entry['name']}")
        arr = np.frombuffer(data[pos : pos + nbytes], dtype=dtype).reshape(entry["shape"])
        state[entry["name"]] = torch.from_numpy(arr.astype(dtype.newbyteorder("="), copy=True))
        pos += nbytes
    if pos != len(data):
        raise CheckpointError("trailing bytes in checkpoint")
    model.load_state_dict(state)
    return model, header["meta"]


def save_checkpoint(model: MotionPredictor, path: str | os.PathLike, meta: Optional[Dict[str, Any]] = None) -> None:
    Path(path).write_bytes(dumps(model, meta))


def load_checkpoint(path: str | os.PathLike) -> Tuple[MotionPredictor, Dict[str, Any]]:
    return loads(Path(path).read_bytes())


def is_checkpoint(path: str | os.PathLike) -> bool:
    with open(path, "rb") as fh:
        return fh.read(4) == MAGIC
