import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpa.scene import Frame, Scene, from_canonical, to_canonical_frame, world_to_canonical_positions, wrap_angle

from conftest import make_track, random_world_scene
from oracles import to_agent_frame


def scene_at(x, y, theta, extra_points=()):
    hist = np.zeros((11, 5))
    hist[:, 0], hist[:, 1], hist[:, 2] = x, y, theta
    others = tuple(make_track(f"n{i}", np.tile([px, py, 0.3, 1.0, -2.0], (11, 1))) for i, (px, py) in enumerate(extra_points))
    return Scene("s", make_track("t", hist), others)


def all_valid_points(scene):
    pts = []
    for tr in (scene.target, *scene.neighbors):
        pts.append(tr.history[tr.history_valid, :2])
        pts.append(tr.future[tr.future_valid, :2])
    pts.extend(p.nodes[:, :2] for p in scene.roadgraph)
    return np.concatenate(pts)


def test_identity_pose_only_flips_frame():
    rng = np.random.default_rng(0)
    s = scene_at(0.0, 0.0, 0.0, extra_points=rng.normal(size=(3, 2)))
    c = to_canonical_frame(s)
    assert c.frame == Frame.CANONICAL and s.frame == Frame.WORLD
    for a, b in zip((s.target, *s.neighbors), (c.target, *c.neighbors)):
        np.testing.assert_array_equal(a.history, b.history)


def test_quarter_turn_example():
    s = scene_at(3.0, 4.0, math.pi / 2, extra_points=[(3.0, 5.0)])
    c = to_canonical_frame(s)
    got = c.neighbors[0].history[-1, :2]
    np.testing.assert_allclose(got, to_agent_frame((3.0, 5.0), (3.0, 4.0), math.pi / 2), atol=1e-12)
    np.testing.assert_allclose(got, [1.0, 0.0], atol=1e-12)
    assert c.anchor_pose == (3.0, 4.0, math.pi / 2)


def test_from_canonical_examples():
    np.testing.assert_array_equal(from_canonical([[1.5, -2.0]], (0.0, 0.0, 0.0)), [[1.5, -2.0]])
    np.testing.assert_allclose(from_canonical([1.0, 0.0], (3.0, 4.0, math.pi / 2)), [3.0, 5.0], atol=1e-12)


def test_round_trip_on_random_scenes():
    rng = np.random.default_rng(11)
    for i in range(100):
        s = random_world_scene(rng, f"r{i}")
        c = to_canonical_frame(s)
        c.validate()
        for a, b in zip((s.target, *s.neighbors), (c.target, *c.neighbors)):
            np.testing.assert_allclose(from_canonical(b.history[b.history_valid, :2], c.anchor_pose), a.history[a.history_valid, :2], atol=1e-6)
            np.testing.assert_allclose(from_canonical(b.future[b.future_valid, :2], c.anchor_pose), a.future[a.future_valid, :2], atol=1e-6)
            np.testing.assert_allclose(np.hypot(*b.history[:, 3:5].T), np.hypot(*a.history[:, 3:5].T), rtol=0, atol=1e-9 * 50)
            assert np.all(b.history[~b.history_valid] == 0) and np.all(b.future[~b.future_valid] == 0)
        for pa, pb in zip(s.roadgraph, c.roadgraph):
            np.testing.assert_allclose(from_canonical(pb.nodes[:, :2], c.anchor_pose), pa.nodes[:, :2], atol=1e-6)
            pb.validate()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_canonicalization_is_rigid(seed):
    rng = np.random.default_rng(seed)
    s = random_world_scene(rng)
    c = to_canonical_frame(s)
    before, after = all_valid_points(s), all_valid_points(c)
    idx = rng.integers(0, len(before), size=(200, 2))
    d0 = np.linalg.norm(before[idx[:, 0]] - before[idx[:, 1]], axis=1)
    d1 = np.linalg.norm(after[idx[:, 0]] - after[idx[:, 1]], axis=1)
    assert np.all(np.abs(d0 - d1) < 1e-9 * (1 + d0))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_target_at_origin_and_speeds_preserved(seed):
    s = random_world_scene(np.random.default_rng(seed))
    c = to_canonical_frame(s)
    assert np.all(np.abs(c.target.current[:3]) <= 1e-9)
    for a, b in zip((s.target, *s.neighbors), (c.target, *c.neighbors)):
        sa, sb = np.hypot(*a.history[:, 3:5].T), np.hypot(*b.history[:, 3:5].T)
        assert np.all(np.abs(sa - sb) <= 1e-9 * (1 + sa))
        assert np.all(np.abs(b.history[:, 2]) <= math.pi)


def test_headings_wrap_into_half_open_interval():
    out = wrap_angle(np.array([math.pi, -math.pi, 3 * math.pi, 0.0]))
    assert np.all(out > -math.pi) and np.all(out <= math.pi)
    assert out[1] == pytest.approx(math.pi)


def test_world_to_canonical_inverts_from_canonical():
    pose = (10.0, -3.0, 2.0)
    pts = np.random.default_rng(1).normal(size=(7, 2)) * 30
    np.testing.assert_allclose(world_to_canonical_positions(from_canonical(pts, pose), pose), pts, atol=1e-9)


def test_rejects_invalid_target_and_double_canonicalization():
    s = scene_at(1.0, 2.0, 0.5)
    valid = s.target.history_valid.copy()
    valid[-1] = False
    hist = s.target.history.copy()
    hist[-1] = 0
    from dataclasses import replace

    bad = replace(s, target=replace(s.target, history=hist, history_valid=valid))
    with pytest.raises(ValueError, match="invalid"):
        to_canonical_frame(bad)
    with pytest.raises(ValueError, match="already canonical"):
        to_canonical_frame(to_canonical_frame(s))


def test_invariant_violations_detected():
    s = scene_at(0, 0, 0)
    hist = s.target.history.copy()
    valid = s.target.history_valid.copy()
    valid[2] = False  # numeric fields left non-zero
    hist[2] = 1.0
    from dataclasses import replace

    with pytest.raises(ValueError):
        replace(s, target=replace(s.target, history=hist, history_valid=valid)).validate()
