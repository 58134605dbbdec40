import math

import numpy as np
import pytest

from scopesim.env import EnvConfig, SceneEnvironment
from scopesim.geometry import position_distance, rotation_geodesic
from scopesim.pipeline import preprocess
from scopesim.renderer import CameraIntrinsics, PointCloudScene, render
from scopesim.scenegen import (
    DemoSpec,
    GenerationError,
    SceneSpec,
    cavity_center_pose,
    generate_demonstration,
    generate_scene,
    landmark_framed,
    minimum_jerk,
    project,
)
from scopesim.trajectory import extract_demonstrations

DEG = math.pi / 180


def test_scene_is_deterministic_and_sized():
    a = generate_scene(SceneSpec(seed=1, point_count=5000))
    b = generate_scene(SceneSpec(seed=1, point_count=5000))
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.colors, b.colors)
    assert not np.array_equal(a.positions, generate_scene(SceneSpec(seed=2, point_count=5000)).positions)
    full = generate_scene(SceneSpec(seed=0))
    assert len(full) == 100_000
    lo, hi = full.bounds
    assert np.all(full.positions >= lo) and np.all(full.positions <= hi)
    assert np.all(np.isfinite(full.positions))


def test_spec_validation():
    with pytest.raises(ValueError):
        SceneSpec(point_count=10)
    with pytest.raises(ValueError):
        SceneSpec(radius_range=(5, 1))
    with pytest.raises(ValueError):
        DemoSpec(jitter_pos=-1)
    with pytest.raises(ValueError):
        DemoSpec(path_length_range=(0, 3))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_center_view_is_mostly_covered(seed):
    scene = generate_scene(SceneSpec(seed=seed))
    img = render(scene, cavity_center_pose(), CameraIntrinsics.default(), 1)
    assert img.coverage() >= 0.9


def test_minimum_jerk_profile():
    s = np.linspace(0, 1, 101)
    p = minimum_jerk(s)
    assert p[0] == 0 and p[-1] == 1
    assert np.all(np.diff(p) >= 0)
    # zero boundary velocity
    h = 1e-6
    assert abs(minimum_jerk(np.array([h]))[0]) / h < 1e-8
    assert abs(1 - minimum_jerk(np.array([1 - h]))[0]) / h < 1e-8


def test_noise_free_demo_hits_endpoints(small_scene):
    raw, goal = generate_demonstration(small_scene, DemoSpec(seed=3, jitter_pos=0, jitter_rot=0))
    from scopesim.geometry import EulerPose, euler_to_pose

    last = euler_to_pose(EulerPose.from_array(raw.poses[-1]))
    assert position_distance(last, goal) < 1e-12
    assert rotation_geodesic(last.rotation, goal.rotation) < 1e-12
    length = np.linalg.norm(raw.poses[-1, :3] - raw.poses[0, :3])
    assert 8.0 <= length <= 14.0


@pytest.mark.parametrize("seed", range(5))
def test_goal_frames_landmark(seed):
    scene = generate_scene(SceneSpec(seed=seed))
    intr = CameraIntrinsics.default()
    _, goal = generate_demonstration(scene, DemoSpec(seed=seed))
    u, v, z = project(scene.landmarks[0, :3], goal, intr)
    assert abs(u - intr.cx) <= 0.1 * intr.width and abs(v - intr.cy) <= 0.1 * intr.height
    assert z > 0
    assert landmark_framed(scene, goal, intr)


def test_demo_is_deterministic(small_scene):
    a, ga = generate_demonstration(small_scene, DemoSpec(seed=9))
    b, gb = generate_demonstration(small_scene, DemoSpec(seed=9))
    assert np.array_equal(a.poses, b.poses) and ga.allclose(gb, atol=0)


def test_generation_failures(small_scene):
    with pytest.raises(GenerationError):
        generate_demonstration(small_scene, DemoSpec(seed=0, retries=0))
    bare = PointCloudScene(small_scene.positions, small_scene.colors)
    with pytest.raises(GenerationError):
        generate_demonstration(bare, DemoSpec(seed=0))


def test_preprocessed_demo_replays_to_success(small_scene):
    for seed in range(3):
        raw, _ = generate_demonstration(small_scene, DemoSpec(seed=seed))
        w = preprocess(raw)
        env = SceneEnvironment(small_scene, w, EnvConfig(obs_width=40, obs_height=32))
        env.reset(start=w.pose(0))
        info = {"success": False}
        for t in extract_demonstrations(w, env):
            _, done, info = env.step(t.action.normalized(env.config.limits))
            if done:
                break
        assert info["success"]


def test_dataset_scale_ranges():
    lengths, steps = [], []
    for seed in range(6):
        scene = generate_scene(SceneSpec(seed=seed, point_count=20_000))
        raw, _ = generate_demonstration(scene, DemoSpec(seed=seed))
        w = preprocess(raw)
        lengths.append(np.linalg.norm(w.positions[-1] - w.positions[0]))
        steps.append(len(w) - 1)
    assert 8.0 <= np.mean(lengths) <= 14.0
    assert 6 <= np.mean(steps) <= 16
