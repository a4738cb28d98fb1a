"""Training-time history masking."""
from __future__ import annotations

import zlib
from dataclasses import replace

import numpy as np

from .scene import AgentTrack, Scene

DEFAULT_P_MASK = 0.15


def masking_rng(seed: int, scene_id: str, epoch: int) -> np.random.Generator:
    """Per-scene stream derived from (global seed, scene id, epoch)."""
    return np.random.default_rng([seed, zlib.crc32(scene_id.encode("utf-8")), epoch])


def _mask_track(track: AgentTrack, p_mask: float, rng: np.random.Generator) -> AgentTrack:
    drop = rng.random(len(track.history)) < p_mask
    if not drop.any():
        return track
    history = track.history.copy()
    history[drop] = 0.0
    return replace(track, history=history, history_valid=track.history_valid & ~drop)


def mask_history(scene: Scene, p_mask: float = DEFAULT_P_MASK, seed: int = 0, epoch: int = 0) -> Scene:
    """Zero out and invalidate each (agent, history step) independently with prob ``p_mask``.

    The target's current step may be masked too; ``anchor_pose`` is left alone,
    as are futures and the road graph.
    """
    if not 0.0 <= p_mask <= 1.0:
        raise ValueError(f"p_mask must be in [0, 1], got {p_mask}")
    if p_mask == 0.0:
        return scene
    rng = masking_rng(seed, scene.scene_id, epoch)
    return replace(
        scene,
        target=_mask_track(scene.target, p_mask, rng),
        neighbors=tuple(_mask_track(t, p_mask, rng) for t in scene.neighbors),
    )
