"""Turn canonical scenes into padded model tensors."""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np
import torch

from .scene import HEADING, VX, VY, X, Y, AgentTrack, AgentType, Scene
from .synth import NUM_LANE_TYPES

POSITION_SCALE = 20.0
VELOCITY_SCALE = 10.0
TRACK_FEATURES = 7  # x, y, cos, sin, vx, vy, valid
NODE_FEATURES = 5  # x, y, dir_x, dir_y, valid
NUM_AGENT_TYPES = len(AgentType)


def track_features(history: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """``(H, 7)`` per-step features; invalid steps are all zero."""
    feats = np.stack(
        [
            history[:, X] / POSITION_SCALE,
            history[:, Y] / POSITION_SCALE,
            np.cos(history[:, HEADING]),
            np.sin(history[:, HEADING]),
            history[:, VX] / VELOCITY_SCALE,
            history[:, VY] / VELOCITY_SCALE,
            np.ones(len(history)),
        ],
        axis=1,
    )
    return feats * valid[:, None]


def _one_hot(index: int, size: int) -> np.ndarray:
    out = np.zeros(size)
    out[index] = 1.0
    return out


def _last_position(track: AgentTrack) -> np.ndarray:
    idx = np.flatnonzero(track.history_valid)
    return track.history[idx[-1], :2] if len(idx) else np.full(2, np.inf)


@dataclass
class Batch:
    target: torch.Tensor  # (B, H, 7)
    target_type: torch.Tensor  # (B, 3)
    neighbors: torch.Tensor  # (B, N, H, 7)
    neighbor_type: torch.Tensor  # (B, N, 3)
    neighbor_mask: torch.Tensor  # (B, N) bool
    polylines: torch.Tensor  # (B, P, L, 5)
    lane_type: torch.Tensor  # (B, P, NUM_LANE_TYPES)
    polyline_mask: torch.Tensor  # (B, P) bool
    gt: torch.Tensor  # (B, T, 2), T may be 0
    gt_valid: torch.Tensor  # (B, T) bool

    def to(self, dtype: torch.dtype) -> "Batch":
        return Batch(**{
            f.name: (v.to(dtype) if v.is_floating_point() else v)
            for f in fields(self)
            for v in [getattr(self, f.name)]
        })

    def __len__(self) -> int:
        return self.target.shape[0]


def collate(
    scenes: Sequence[Scene],
    history_steps: int = 11,
    max_neighbors: int = 8,
    max_polylines: int = 32,
    max_nodes: int = 20,
    dtype: torch.dtype = torch.float32,
) -> Batch:
    B, H = len(scenes), history_steps
    T = max((len(s.target.future) for s in scenes), default=0)
    target = np.zeros((B, H, TRACK_FEATURES))
    target_type = np.zeros((B, NUM_AGENT_TYPES))
    neighbors = np.zeros((B, max_neighbors, H, TRACK_FEATURES))
    neighbor_type = np.zeros((B, max_neighbors, NUM_AGENT_TYPES))
    neighbor_mask = np.zeros((B, max_neighbors), dtype=bool)
    polylines = np.zeros((B, max_polylines, max_nodes, NODE_FEATURES))
    lane_type = np.zeros((B, max_polylines, NUM_LANE_TYPES))
    polyline_mask = np.zeros((B, max_polylines), dtype=bool)
    gt = np.zeros((B, T, 2))
    gt_valid = np.zeros((B, T), dtype=bool)

    for b, scene in enumerate(scenes):
        if len(scene.target.history) != H:
            raise ValueError(f"scene {scene.scene_id}: history length {len(scene.target.history)} != {H}")
        target[b] = track_features(scene.target.history, scene.target.history_valid)
        target_type[b] = _one_hot(scene.target.agent_type, NUM_AGENT_TYPES)

        observed = [t for t in scene.neighbors if t.history_valid.any()]
        observed.sort(key=lambda t: float(np.hypot(*_last_position(t))))
        for i, track in enumerate(observed[:max_neighbors]):
            neighbors[b, i] = track_features(track.history, track.history_valid)
            neighbor_type[b, i] = _one_hot(track.agent_type, NUM_AGENT_TYPES)
            neighbor_mask[b, i] = True

        polys = sorted(scene.roadgraph, key=lambda p: float(np.min(np.hypot(p.nodes[:, 0], p.nodes[:, 1]))))
        for i, poly in enumerate(polys[:max_polylines]):
            nodes = poly.nodes[:max_nodes]
            n = len(nodes)
            polylines[b, i, :n, :2] = nodes[:, :2] / POSITION_SCALE
            polylines[b, i, :n, 2:4] = nodes[:, 2:4]
            polylines[b, i, :n, 4] = 1.0
            lane_type[b, i] = _one_hot(poly.lane_type % NUM_LANE_TYPES, NUM_LANE_TYPES)
            polyline_mask[b, i] = True

        fut = scene.target.future
        if len(fut):
            gt[b, : len(fut)] = fut[:, :2]
            gt_valid[b, : len(fut)] = scene.target.future_valid

    as_t = lambda a: torch.as_tensor(a, dtype=dtype)  # noqa: E731
    return Batch(
        target=as_t(target),
        target_type=as_t(target_type),
        neighbors=as_t(neighbors),
        neighbor_type=as_t(neighbor_type),
        neighbor_mask=torch.as_tensor(neighbor_mask),
        polylines=as_t(polylines),
        lane_type=as_t(lane_type),
        polyline_mask=torch.as_tensor(polyline_mask),
        gt=as_t(gt),
        gt_valid=torch.as_tensor(gt_valid),
    )
