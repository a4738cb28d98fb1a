"""Non-maximum suppression over predicted trajectories.

Suppressed modes are not dropped. They keep their trajectory and get a small
constant probability, while the kept modes share what is left.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .config import doc
from .scene import AgentType

# kept modes never fall to the suppressed level, so a second pass sees the same order
FLOOR_MARGIN = 1e-6


@dataclass(frozen=True)
class PostprocessConfig:
    """Non-maximum suppression settings used by eval and predict."""

    nms: bool = doc("apply non-maximum suppression", True)
    nms_threshold_vehicle: float = doc("suppression distance for vehicles, m", 2.0)
    nms_threshold_pedestrian: float = doc("suppression distance for pedestrians, m", 0.5)
    nms_threshold_cyclist: float = doc("suppression distance for cyclists, m", 1.0)
    nms_p_min: float = doc("probability assigned to suppressed modes", 0.01)
    nms_distance: str = doc("trajectory distance: max (over time) | endpoint", "max")

    def threshold(self, agent_type: AgentType) -> float:
        return getattr(self, f"nms_threshold_{AgentType(agent_type).label}")


def trajectory_distance(a, b, mode: str = "max") -> float:
    """Max-over-time (or final-step) Euclidean distance between ``(T, 2)`` paths."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"trajectory shapes differ: {a.shape} vs {b.shape}")
    d = np.hypot(a[..., 0] - b[..., 0], a[..., 1] - b[..., 1])
    if mode == "max":
        return float(d.max())
    if mode == "endpoint":
        return float(d[-1])
    raise ValueError(f"unknown distance mode {mode!r}")


def _share_kept_mass(probs: np.ndarray, mass: float, floor: float) -> np.ndarray:
    """Split ``mass`` proportionally to ``probs`` with every share >= ``floor``."""
    out = np.empty_like(probs)
    free = np.ones(len(probs), dtype=bool)
    remaining = mass
    while True:
        share = remaining * probs[free] / probs[free].sum()
        low = share < floor
        if not low.any():
            out[free] = share
            return out
        idx = np.flatnonzero(free)[low]
        out[idx] = floor
        free[idx] = False
        remaining -= floor * len(idx)


def nms_probabilities(
    trajectories: np.ndarray,
    probabilities: np.ndarray,
    threshold: float,
    p_min: float = 0.01,
    distance: str = "max",
) -> Tuple[np.ndarray, np.ndarray]:
    """Greedy suppression; returns ``(new_probabilities, kept_flags)``.

    Modes are visited in descending probability (ties: lower index first). A
    mode within ``threshold`` of an already kept mode is suppressed to ``p_min``;
    kept modes share ``1 - n_suppressed * p_min`` in proportion to their input
    probabilities, lifted to just above ``p_min`` where the share would be lower.
    """
    trajectories = np.asarray(trajectories, dtype=np.float64)
    probabilities = np.asarray(probabilities, dtype=np.float64)
    M = len(probabilities)
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if not 0 < p_min or p_min * M * (1 + FLOOR_MARGIN) >= 1:
        raise ValueError(f"p_min must be in (0, 1/M) with M={M}")
    if trajectories.shape[0] != M:
        raise ValueError("one trajectory per probability required")

    order = np.lexsort((np.arange(M), -probabilities))
    kept = np.zeros(M, dtype=bool)
    for i in order:
        if not any(trajectory_distance(trajectories[i], trajectories[j], distance) <= threshold for j in np.flatnonzero(kept)):
            kept[i] = True

    out = np.full(M, p_min)
    n_sup = M - kept.sum()
    out[kept] = _share_kept_mass(probabilities[kept], 1.0 - n_sup * p_min, p_min * (1 + FLOOR_MARGIN))
    return out, kept


def nms(modes, threshold: float, p_min: float = 0.01, distance: str = "max"):
    """Apply :func:`nms_probabilities` to an unbatched ModeSet."""
    import torch

    from .predictor import ModeSet

    traj = modes.trajectories.detach().cpu().numpy()
    probs = modes.probabilities.detach().cpu().numpy()
    new, _ = nms_probabilities(traj, probs, threshold, p_min, distance)
    logits = torch.as_tensor(np.log(new), dtype=modes.logits.dtype)
    return ModeSet(modes.trajectories, modes.cov_raw, logits)
