"""Batched inference, the prediction file format, and evaluation records.

Prediction file layout (little-endian)::

    magic b"MPAP" | u32 version (=1) | u64 record count
    record*  u16 len + utf-8 scene_id | u8 agent_type | u32 M | u32 T
             | M*T*2 f64 world-frame trajectories | M f64 probabilities
    trailer  u32 CRC-32 of every preceding byte
"""
from __future__ import annotations

import io
import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
import torch

from .features import collate
from .metrics import EvalRecord
from .postprocess import PostprocessConfig, nms_probabilities
from .predictor import MotionPredictor
from .scene import AgentType, Scene, from_canonical

MAGIC = b"MPAP"
VERSION = 1


class PredictionFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Prediction:
    scene_id: str
    agent_type: AgentType
    trajectories: np.ndarray  # (M, T, 2) world frame
    probabilities: np.ndarray  # (M,)


ModelTable = Union[MotionPredictor, Mapping[AgentType, MotionPredictor]]


def _model_for(models: ModelTable, agent_type: AgentType) -> MotionPredictor:
    if isinstance(models, MotionPredictor):
        return models
    return models[AgentType(agent_type)]


@torch.no_grad()
def predict_canonical(model: MotionPredictor, scenes: Sequence[Scene], batch_size: int = 64):
    """Raw model outputs for canonical scenes: ``(trajectories, probabilities)`` numpy arrays."""
    model.eval()
    cfg = model.config
    dtype = next(model.parameters()).dtype
    trajs, probs = [], []
    for start in range(0, len(scenes), batch_size):
        chunk = scenes[start : start + batch_size]
        batch = collate(chunk, cfg.history_steps, cfg.max_neighbors, cfg.max_polylines, cfg.max_nodes, dtype=dtype)
        out = model(batch)
        trajs.append(out.trajectories.double().numpy())
        probs.append(out.probabilities.double().numpy())
    if not trajs:
        return np.zeros((0, cfg.num_modes, cfg.future_steps, 2)), np.zeros((0, cfg.num_modes))
    return np.concatenate(trajs), np.concatenate(probs)


def predict_scenes(
    models: ModelTable,
    scenes: Sequence[Scene],
    post: Optional[PostprocessConfig] = None,
    batch_size: int = 64,
) -> List[Prediction]:
    """World-frame predictions, each scene routed to the model for its target type."""
    post = post or PostprocessConfig()
    results: Dict[int, Prediction] = {}
    for agent_type in AgentType:
        idx = [i for i, s in enumerate(scenes) if s.target.agent_type == agent_type]
        if not idx:
            continue
        model = _model_for(models, agent_type)
        trajs, probs = predict_canonical(model, [scenes[i] for i in idx], batch_size)
        for i, traj, prob in zip(idx, trajs, probs):
            scene = scenes[i]
            if post.nms:
                prob, _ = nms_probabilities(traj, prob, post.threshold(agent_type), post.nms_p_min, post.nms_distance)
            results[i] = Prediction(scene.scene_id, agent_type, from_canonical(traj, scene.anchor_pose), prob)
    return [results[i] for i in range(len(scenes))]


def eval_records(predictions: Iterable[Prediction], scenes: Sequence[Scene]) -> List[EvalRecord]:
    """Pair predictions with the ground truth of the scenes they were made for."""
    by_id = {s.scene_id: s for s in scenes}
    records = []
    for pred in predictions:
        scene = by_id.get(pred.scene_id)
        if scene is None:
            raise KeyError(f"no scene {pred.scene_id!r} in the evaluation data")
        fut = scene.target.future
        if len(fut) == 0:
            raise ValueError(f"scene {scene.scene_id} has no ground-truth future")
        gt = from_canonical(fut[:, :2], scene.anchor_pose) if scene.frame else fut[:, :2]
        gt = np.where(scene.target.future_valid[:, None], gt, 0.0)
        speed = float(np.hypot(*scene.target.current[3:5]))
        records.append(EvalRecord(scene.scene_id, scene.target.agent_type, pred.trajectories,
                                  pred.probabilities, gt, scene.target.future_valid, speed))
    return records


def dumps(predictions: Iterable[Prediction]) -> bytes:
    predictions = list(predictions)
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IQ", VERSION, len(predictions)))
    for p in predictions:
        raw = p.scene_id.encode("utf-8")
        traj = np.ascontiguousarray(p.trajectories, dtype="<f8")
        M, T, _ = traj.shape
        buf.write(struct.pack("<H", len(raw)) + raw)
        buf.write(struct.pack("<BII", int(p.agent_type), M, T))
        buf.write(traj.tobytes())
        buf.write(np.ascontiguousarray(p.probabilities, dtype="<f8").tobytes())
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def loads(data: bytes) -> List[Prediction]:
    if len(data) < 20 or data[:4] != MAGIC:
        raise PredictionFormatError("not a prediction file")
    version, count = struct.unpack("<IQ", data[4:16])
    if version != VERSION:
        raise PredictionFormatError(f"unsupported prediction file version {version}")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise PredictionFormatError("checksum mismatch, prediction file is corrupt")
    pos = 16
    out = []
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", body, pos)
            pos += 2
            scene_id = body[pos : pos + n].decode("utf-8")
            pos += n
            agent_type, M, T = struct.unpack_from("<BII", body, pos)
            pos += 9
            traj = np.frombuffer(body, dtype="<f8", count=M * T * 2, offset=pos).reshape(M, T, 2).astype(np.float64)
            pos += M * T * 16
            probs = np.frombuffer(body, dtype="<f8", count=M, offset=pos).astype(np.float64)
            pos += M * 8
            out.append(Prediction(scene_id, AgentType(agent_type), traj, probs))
    except (struct.error, ValueError) as exc:
        raise PredictionFormatError(f"malformed prediction record {len(out)}: {exc}") from exc
    if pos != len(body):
        raise PredictionFormatError("trailing bytes in prediction file")
    return out


def write_predictions(predictions: Iterable[Prediction], path: str | os.PathLike) -> None:
    Path(path).write_bytes(dumps(predictions))


def read_predictions(path: str | os.PathLike) -> List[Prediction]:
    return loads(Path(path).read_bytes())
