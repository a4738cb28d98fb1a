"""Scene data model and the agent-centric canonical transform."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Tuple

import numpy as np

# column layout of AgentTrack.history / .future
X, Y, HEADING, VX, VY = range(5)
STATE_DIM = 5


class AgentType(enum.IntEnum):
    VEHICLE = 0
    PEDESTRIAN = 1
    CYCLIST = 2

    @property
    def label(self) -> str:
        return self.name.lower()


class Frame(enum.IntEnum):
    WORLD = 0
    CANONICAL = 1


class AgentState(NamedTuple):
    x: float
    y: float
    heading: float
    vx: float
    vy: float
    valid: bool


def wrap_angle(angle):
    """Map angles into (-pi, pi]; angles already in range are returned unchanged."""
    angle = np.asarray(angle, dtype=np.float64)
    wrapped = -np.remainder(-angle + np.pi, 2 * np.pi) + np.pi
    return np.where((angle > -np.pi) & (angle <= np.pi), angle, wrapped)


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def _same(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and a.dtype == b.dtype and a.tobytes() == b.tobytes()


@dataclass(frozen=True, eq=False)
class AgentTrack:
    """Fixed-shape state sequence for one agent.

    ``history`` is ``(H, 5)`` with columns x, y, heading, vx, vy; the last row is
    the current timestep. ``future`` is ``(T, 5)`` or ``(0, 5)`` at inference.
    Invalid rows are all zero.
    """

    agent_id: str
    agent_type: AgentType
    history: np.ndarray
    history_valid: np.ndarray
    future: np.ndarray = field(default_factory=lambda: np.zeros((0, STATE_DIM)))
    future_valid: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def __post_init__(self):
        object.__setattr__(self, "agent_type", AgentType(self.agent_type))
        for name in ("history", "future"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != STATE_DIM:
                raise ValueError(f"{name} must have shape (n, {STATE_DIM}), got {arr.shape}")
            object.__setattr__(self, name, arr)
        for name, ref in (("history_valid", self.history), ("future_valid", self.future)):
            mask = np.asarray(getattr(self, name), dtype=bool)
            if mask.shape != (len(ref),):
                raise ValueError(f"{name} has shape {mask.shape}, expected ({len(ref)},)")
            object.__setattr__(self, name, mask)

    @property
    def current(self) -> np.ndarray:
        return self.history[-1]

    def state(self, t: int) -> AgentState:
        row = self.history[t]
        return AgentState(*map(float, row), bool(self.history_valid[t]))

    def validate(self, history_steps: int | None = None, future_steps: int | None = None) -> None:
        if history_steps is not None and len(self.history) != history_steps:
            raise ValueError(f"track {self.agent_id}: history length {len(self.history)} != {history_steps}")
        if future_steps is not None and len(self.future) not in (0, future_steps):
            raise ValueError(f"track {self.agent_id}: future length {len(self.future)} not in (0, {future_steps})")
        for arr, mask in ((self.history, self.history_valid), (self.future, self.future_valid)):
            if np.any(arr[~mask] != 0):
                raise ValueError(f"track {self.agent_id}: invalid timestep with non-zero payload")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"track {self.agent_id}: non-finite state")
            h = arr[mask, HEADING]
            if np.any(h <= -np.pi) or np.any(h > np.pi):
                raise ValueError(f"track {self.agent_id}: heading outside (-pi, pi]")

    def __eq__(self, other):
        if not isinstance(other, AgentTrack):
            return NotImplemented
        return (
            self.agent_id == other.agent_id
            and self.agent_type == other.agent_type
            and _same(self.history, other.history)
            and _same(self.history_valid, other.history_valid)
            and _same(self.future, other.future)
            and _same(self.future_valid, other.future_valid)
        )


@dataclass(frozen=True, eq=False)
class RoadGraphPolyline:
    """Ordered lane nodes, ``nodes`` is ``(n, 4)``: x, y, dir_x, dir_y."""

    nodes: np.ndarray
    lane_type: int = 0

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64)
        if nodes.ndim != 2 or nodes.shape[1] != 4:
            raise ValueError(f"polyline nodes must have shape (n, 4), got {nodes.shape}")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "lane_type", int(self.lane_type))

    def validate(self) -> None:
        norms = np.hypot(self.nodes[:, 2], self.nodes[:, 3])
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("polyline direction vectors must have unit norm")

    def __eq__(self, other):
        if not isinstance(other, RoadGraphPolyline):
            return NotImplemented
        return self.lane_type == other.lane_type and _same(self.nodes, other.nodes)


@dataclass(frozen=True, eq=False)
class Scene:
    scene_id: str
    target: AgentTrack
    neighbors: Tuple[AgentTrack, ...] = ()
    roadgraph: Tuple[RoadGraphPolyline, ...] = ()
    frame: Frame = Frame.WORLD
    anchor_pose: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "neighbors", tuple(self.neighbors))
        object.__setattr__(self, "roadgraph", tuple(self.roadgraph))
        object.__setattr__(self, "frame", Frame(self.frame))
        object.__setattr__(self, "anchor_pose", tuple(float(v) for v in self.anchor_pose))

    def validate(self, history_steps: int | None = None, future_steps: int | None = None) -> None:
        """Raise ValueError if any data-model invariant is violated."""
        for track in (self.target, *self.neighbors):
            track.validate(history_steps, future_steps)
        for poly in self.roadgraph:
            poly.validate()
        if not self.target.history_valid[-1]:
            raise ValueError(f"scene {self.scene_id}: target current state is invalid")
        if self.frame == Frame.CANONICAL:
            x, y, h = self.target.current[:3]
            if max(abs(x), abs(y), abs(h)) > 1e-9:
                raise ValueError(f"scene {self.scene_id}: canonical target is not at the origin pose")

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            self.scene_id == other.scene_id
            and self.frame == other.frame
            and self.anchor_pose == other.anchor_pose
            and self.target == other.target
            and self.neighbors == other.neighbors
            and self.roadgraph == other.roadgraph
        )


def _transform_states(states: np.ndarray, valid: np.ndarray, center, theta: float) -> np.ndarray:
    rot = rotation(-theta)
    out = np.zeros_like(states)
    out[:, :2] = (states[:, :2] - center) @ rot.T
    out[:, HEADING] = wrap_angle(states[:, HEADING] - theta)
    out[:, 3:5] = states[:, 3:5] @ rot.T
    out[~valid] = 0.0
    return out


def _transform_track(track: AgentTrack, center, theta: float) -> AgentTrack:
    return replace(
        track,
        history=_transform_states(track.history, track.history_valid, center, theta),
        future=_transform_states(track.future, track.future_valid, center, theta),
    )


def to_canonical_frame(scene: Scene) -> Scene:
    """Rigidly move the scene so the target sits at the origin facing +x."""
    if scene.frame != Frame.WORLD:
        raise ValueError(f"scene {scene.scene_id} is already canonical")
    if not scene.target.history_valid[-1]:
        raise ValueError(f"scene {scene.scene_id}: target current state is invalid, cannot canonicalize")
    cx, cy, theta = (float(v) for v in scene.target.current[:3])
    center = np.array([cx, cy])
    rot = rotation(-theta)
    roadgraph = []
    for poly in scene.roadgraph:
        nodes = np.empty_like(poly.nodes)
        nodes[:, :2] = (poly.nodes[:, :2] - center) @ rot.T
        nodes[:, 2:] = poly.nodes[:, 2:] @ rot.T
        roadgraph.append(replace(poly, nodes=nodes))
    target = _transform_track(scene.target, center, theta)
    # exact origin pose regardless of rounding in the rotation
    target.history[-1, :3] = 0.0
    return replace(
        scene,
        target=target,
        neighbors=tuple(_transform_track(t, center, theta) for t in scene.neighbors),
        roadgraph=tuple(roadgraph),
        frame=Frame.CANONICAL,
        anchor_pose=(cx, cy, theta),
    )


def from_canonical(points, anchor_pose) -> np.ndarray:
    """Map canonical-frame ``(..., 2)`` points back to the world frame."""
    x, y, theta = anchor_pose
    pts = np.asarray(points, dtype=np.float64)
    return pts @ rotation(theta).T + np.array([x, y])


def world_to_canonical_positions(points, anchor_pose) -> np.ndarray:
    x, y, theta = anchor_pose
    pts = np.asarray(points, dtype=np.float64)
    return (pts - np.array([x, y])) @ rotation(-theta).T
