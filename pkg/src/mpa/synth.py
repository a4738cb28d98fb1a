"""Synthetic driving scenes with simple kinematic agents.

Each agent moves with a constant speed and turn rate over its history. At the
current timestep the target (and every neighbor) switches to a future behavior
drawn from a mixture of constant velocity, constant turn rate and a
constant-deceleration stop. Lanes are laid along the target's candidate paths
plus a few unrelated straight lanes, so the map carries genuine multimodality.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .config import doc
from .scene import STATE_DIM, AgentTrack, AgentType, RoadGraphPolyline, Scene, wrap_angle

BEHAVIORS = ("cv", "turn", "stop")
NUM_LANE_TYPES = 4


@dataclass(frozen=True)
class GeneratorConfig:
    """Synthetic scene generator settings."""

    history_steps: int = doc("history length H including the current step", 11)
    future_steps: int = doc("future horizon T", 80)
    dt: float = doc("timestep in seconds", 0.1)
    min_neighbors: int = doc("minimum number of neighbor agents", 0)
    max_neighbors: int = doc("maximum number of neighbor agents", 8)
    num_random_lanes: int = doc("unrelated straight lanes added near the target", 4)
    max_nodes_per_polyline: int = doc("longer lanes are split into chunks of this many nodes", 20)
    node_stride: int = doc("timesteps between consecutive lane nodes", 5)
    lane_min_speed: float = doc("speed used to lay lanes for slow agents, m/s", 3.0)
    neighbor_radius: float = doc("neighbors start within this distance of the target, m", 30.0)
    world_extent: float = doc("target current position drawn uniformly in [-extent, extent]^2, m", 100.0)
    weight_vehicle: float = doc("relative frequency of vehicle agents", 0.6)
    weight_pedestrian: float = doc("relative frequency of pedestrian agents", 0.25)
    weight_cyclist: float = doc("relative frequency of cyclist agents", 0.15)
    behavior_cv: float = doc("mixture weight of constant-velocity futures", 0.5)
    behavior_turn: float = doc("mixture weight of constant-turn-rate futures", 0.3)
    behavior_stop: float = doc("mixture weight of stopping futures", 0.2)
    vehicle_speed_min: float = doc("m/s", 3.0)
    vehicle_speed_max: float = doc("m/s", 15.0)
    pedestrian_speed_min: float = doc("m/s", 0.5)
    pedestrian_speed_max: float = doc("m/s", 2.0)
    cyclist_speed_min: float = doc("m/s", 2.0)
    cyclist_speed_max: float = doc("m/s", 7.0)
    history_turn_rate_max: float = doc("max |turn rate| during the history, rad/s", 0.1)
    turn_rate_min: float = doc("min |turn rate| of turning futures, rad/s", 0.1)
    turn_rate_max: float = doc("max |turn rate| of turning futures, rad/s", 0.3)
    stop_decel_min: float = doc("m/s^2", 1.0)
    stop_decel_max: float = doc("m/s^2", 4.0)
    speed_jump_max: float = doc("max speed change across the current step, m/s", 0.3)
    history_missing_prob: float = doc("probability a past (non-current) observation is missing", 0.05)
    target_type: str = doc("force the target type (vehicle|pedestrian|cyclist), empty = random", "")
    target_behavior: str = doc("force the target future behavior (cv|turn|stop), empty = random", "")
    target_speed: float = doc("force the target speed in m/s, negative = random", -1.0)

    def validate(self) -> None:
        for name in ("history_steps", "future_steps", "max_neighbors", "max_nodes_per_polyline", "node_stride"):
            if getattr(self, name) <= 0:
                raise ValueError(f"generator config: {name} must be positive")
        if self.min_neighbors < 0 or self.min_neighbors > self.max_neighbors:
            raise ValueError("generator config: need 0 <= min_neighbors <= max_neighbors")
        if self.num_random_lanes < 0:
            raise ValueError("generator config: num_random_lanes must be non-negative")
        if self.dt <= 0:
            raise ValueError("generator config: dt must be positive")
        if min(self.type_weights) < 0 or sum(self.type_weights) <= 0:
            raise ValueError("generator config: agent type weights must be non-negative with a positive sum")
        if min(self.behavior_weights) < 0 or sum(self.behavior_weights) <= 0:
            raise ValueError("generator config: behavior weights must be non-negative with a positive sum")
        if not 0 <= self.history_missing_prob < 1:
            raise ValueError("generator config: history_missing_prob must be in [0, 1)")
        if self.target_behavior and self.target_behavior not in BEHAVIORS:
            raise ValueError(f"generator config: target_behavior must be one of {BEHAVIORS}")
        if self.target_type and self.target_type not in [t.label for t in AgentType]:
            raise ValueError("generator config: unknown target_type")

    @property
    def type_weights(self) -> Tuple[float, float, float]:
        return (self.weight_vehicle, self.weight_pedestrian, self.weight_cyclist)

    @property
    def behavior_weights(self) -> Tuple[float, float, float]:
        return (self.behavior_cv, self.behavior_turn, self.behavior_stop)

    def speed_range(self, agent_type: AgentType) -> Tuple[float, float]:
        name = agent_type.label
        return getattr(self, f"{name}_speed_min"), getattr(self, f"{name}_speed_max")


def _rollout(x, y, heading, speeds, turn_rates, dt):
    """Integrate unicycle kinematics; speeds/turn_rates are per-step arrays."""
    headings = heading + np.cumsum(turn_rates * dt)
    vx = speeds * np.cos(headings)
    vy = speeds * np.sin(headings)
    xs = x + np.cumsum(vx * dt)
    ys = y + np.cumsum(vy * dt)
    return np.stack([xs, ys, wrap_angle(headings), vx, vy], axis=1)


def _future_profile(behavior: str, speed: float, rng: np.random.Generator, cfg: GeneratorConfig):
    t = np.arange(1, cfg.future_steps + 1)
    if behavior == "cv":
        return np.full(len(t), speed), np.zeros(len(t))
    if behavior == "turn":
        rate = rng.uniform(cfg.turn_rate_min, cfg.turn_rate_max) * rng.choice([-1.0, 1.0])
        return np.full(len(t), speed), np.full(len(t), rate)
    decel = rng.uniform(cfg.stop_decel_min, cfg.stop_decel_max)
    return np.maximum(speed - decel * cfg.dt * t, 0.0), np.zeros(len(t))


def _simulate_agent(
    agent_id: str,
    agent_type: AgentType,
    current_xy: Tuple[float, float],
    heading: float,
    speed: float,
    behavior: str,
    rng: np.random.Generator,
    cfg: GeneratorConfig,
    keep_current: bool,
) -> Tuple[AgentTrack, float]:
    H = cfg.history_steps
    hist_rate = rng.uniform(-cfg.history_turn_rate_max, cfg.history_turn_rate_max)
    # run the history backwards from the current pose, then flip it
    back = _rollout(current_xy[0], current_xy[1], heading + np.pi, np.full(H - 1, speed), np.full(H - 1, -hist_rate), cfg.dt)
    history = np.zeros((H, STATE_DIM))
    cur = np.array([current_xy[0], current_xy[1], heading, speed * np.cos(heading), speed * np.sin(heading)])
    history[-1] = cur
    if H > 1:
        past = back[::-1].copy()
        past[:, 2] = wrap_angle(past[:, 2] - np.pi)
        past[:, 3:5] *= -1.0
        history[:-1] = past
    history[:, 2] = wrap_angle(history[:, 2])

    jump = rng.uniform(-cfg.speed_jump_max, cfg.speed_jump_max) if cfg.speed_jump_max > 0 else 0.0
    future_speed = max(speed + jump, 0.0)
    speeds, rates = _future_profile(behavior, future_speed, rng, cfg)
    future = _rollout(cur[0], cur[1], heading, speeds, rates, cfg.dt)

    valid = rng.random(H) >= cfg.history_missing_prob
    if keep_current:
        valid[-1] = True
    history[~valid] = 0.0
    track = AgentTrack(
        agent_id=agent_id,
        agent_type=agent_type,
        history=history,
        history_valid=valid,
        future=future,
        future_valid=np.ones(cfg.future_steps, dtype=bool),
    )
    return track, hist_rate


def _lane_from_path(path: np.ndarray, cfg: GeneratorConfig, lane_type: int) -> List[RoadGraphPolyline]:
    pts = path[:: cfg.node_stride]
    nodes = np.stack([pts[:, 0], pts[:, 1], np.cos(pts[:, 2]), np.sin(pts[:, 2])], axis=1)
    n = cfg.max_nodes_per_polyline
    chunks = [nodes[i : i + n] for i in range(0, len(nodes), n)]
    return [RoadGraphPolyline(nodes=c, lane_type=lane_type) for c in chunks if len(c) >= 2]


def _target_lanes(track: AgentTrack, hist_rate: float, cfg: GeneratorConfig, rng) -> List[RoadGraphPolyline]:
    """Lanes along the target's straight, left and right continuations."""
    H, T = cfg.history_steps, cfg.future_steps
    cur = track.current
    speed = max(float(np.hypot(cur[3], cur[4])), cfg.lane_min_speed)
    # start the lane where the history starts so it covers the past too
    start = _rollout(cur[0], cur[1], cur[2] + np.pi, np.full(H - 1, speed), np.full(H - 1, -hist_rate), cfg.dt)
    origin = start[-1] if H > 1 else np.array([cur[0], cur[1], cur[2] + np.pi, 0, 0])
    x0, y0, h0 = origin[0], origin[1], origin[2] - np.pi
    lanes = []
    rates = [0.0, rng.uniform(cfg.turn_rate_min, cfg.turn_rate_max), -rng.uniform(cfg.turn_rate_min, cfg.turn_rate_max)]
    for rate in rates:
        turn = np.concatenate([np.full(H - 1, hist_rate), np.full(T + 1, rate)])
        path = _rollout(x0, y0, h0, np.full(len(turn), speed), turn, cfg.dt)
        path = np.vstack([[x0, y0, wrap_angle(h0), 0.0, 0.0], path])
        lanes.extend(_lane_from_path(path, cfg, lane_type=0))
    return lanes


def _random_lane(center, cfg: GeneratorConfig, rng) -> List[RoadGraphPolyline]:
    heading = rng.uniform(-np.pi, np.pi)
    offset = rng.uniform(-cfg.neighbor_radius, cfg.neighbor_radius, size=2)
    n = cfg.max_nodes_per_polyline * cfg.node_stride
    path = _rollout(center[0] + offset[0], center[1] + offset[1], heading, np.full(n, cfg.lane_min_speed), np.zeros(n), cfg.dt)
    return _lane_from_path(path, cfg, lane_type=int(rng.integers(0, NUM_LANE_TYPES)))


def _pick(rng: np.random.Generator, options, weights):
    w = np.asarray(weights, dtype=np.float64)
    return options[int(rng.choice(len(options), p=w / w.sum()))]


def generate_synthetic_scene(seed: int, params: GeneratorConfig | None = None, scene_id: str | None = None) -> Scene:
    """Deterministically generate one world-frame scene with ground-truth futures."""
    cfg = params or GeneratorConfig()
    cfg.validate()
    rng = np.random.default_rng(seed)
    types = list(AgentType)

    target_type = AgentType[cfg.target_type.upper()] if cfg.target_type else _pick(rng, types, cfg.type_weights)
    lo, hi = cfg.speed_range(target_type)
    speed = cfg.target_speed if cfg.target_speed >= 0 else rng.uniform(lo, hi)
    behavior = cfg.target_behavior or _pick(rng, BEHAVIORS, cfg.behavior_weights)
    center = rng.uniform(-cfg.world_extent, cfg.world_extent, size=2)
    heading = float(wrap_angle(rng.uniform(-np.pi, np.pi)))
    target, hist_rate = _simulate_agent("target", target_type, tuple(center), heading, speed, behavior, rng, cfg, keep_current=True)

    neighbors = []
    for i in range(int(rng.integers(cfg.min_neighbors, cfg.max_neighbors + 1))):
        ntype = _pick(rng, types, cfg.type_weights)
        lo, hi = cfg.speed_range(ntype)
        r = cfg.neighbor_radius * np.sqrt(rng.random())
        phi = rng.uniform(-np.pi, np.pi)
        pos = (center[0] + r * np.cos(phi), center[1] + r * np.sin(phi))
        track, _ = _simulate_agent(
            f"agent{i}", ntype, pos, float(rng.uniform(-np.pi, np.pi)), rng.uniform(lo, hi),
            _pick(rng, BEHAVIORS, cfg.behavior_weights), rng, cfg, keep_current=False,
        )
        neighbors.append(track)

    lanes = _target_lanes(target, hist_rate, cfg, rng)
    for _ in range(cfg.num_random_lanes):
        lanes.extend(_random_lane(center, cfg, rng))

    return Scene(
        scene_id=scene_id if scene_id is not None else f"scene-{seed}",
        target=target,
        neighbors=tuple(neighbors),
        roadgraph=tuple(lanes),
    )


def scene_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def generate_scenes(seed: int, count: int, params: GeneratorConfig | None = None) -> List[Scene]:
    if count <= 0:
        raise ValueError("count must be positive")
    return [
        generate_synthetic_scene(scene_seed(seed, i), params, scene_id=f"s{seed}-{i:06d}")
        for i in range(count)
    ]
