from typing import List

import numpy as np
import pytest
import torch

from mpa.scene import AgentTrack, AgentType, RoadGraphPolyline, Scene, to_canonical_frame
from mpa.synth import generate_scenes


def make_track(agent_id: str, states: np.ndarray, agent_type: AgentType = AgentType.VEHICLE, future=None) -> AgentTrack:
    """Track with every history step valid; ``future`` optional (T, 5)."""
    states = np.asarray(states, dtype=np.float64)
    future = np.zeros((0, 5)) if future is None else np.asarray(future, dtype=np.float64)
    return AgentTrack(agent_id, agent_type, states, np.ones(len(states), bool), future, np.ones(len(future), bool))


def random_world_scene(rng: np.random.Generator, scene_id: str = "r", H: int = 11, T: int = 80) -> Scene:
    """Arbitrary (not kinematic) world-frame scene with random invalid steps."""

    def track(i):
        hist = np.column_stack([rng.uniform(-200, 200, (H, 2)), rng.uniform(-np.pi, np.pi, H), rng.normal(0, 5, (H, 2))])
        fut = np.column_stack([rng.uniform(-200, 200, (T, 2)), rng.uniform(-np.pi, np.pi, T), rng.normal(0, 5, (T, 2))])
        hv = rng.random(H) > 0.2
        fv = rng.random(T) > 0.2
        hv[-1] = hv[-1] or i == 0
        hist[~hv] = 0.0
        fut[~fv] = 0.0
        return AgentTrack(f"a{i}", AgentType(int(rng.integers(3))), hist, hv, fut, fv)

    polys = []
    for j in range(int(rng.integers(0, 4))):
        n = int(rng.integers(2, 20))
        ang = rng.uniform(-np.pi, np.pi, n)
        nodes = np.column_stack([rng.uniform(-200, 200, (n, 2)), np.cos(ang), np.sin(ang)])
        polys.append(RoadGraphPolyline(nodes, int(rng.integers(4))))
    return Scene(scene_id, track(0), tuple(track(i) for i in range(1, int(rng.integers(0, 5)) + 1)), tuple(polys))


@pytest.fixture(scope="session")
def canonical_scenes() -> List[Scene]:
    return [to_canonical_frame(s) for s in generate_scenes(3, 40)]


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
