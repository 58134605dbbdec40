import numpy as np
import pytest

from scopesim.env import EnvConfig, SceneEnvironment
from scopesim.pipeline import preprocess
from scopesim.scenegen import DemoSpec, SceneSpec, generate_demonstration, generate_scene


@pytest.fixture(scope="session")
def small_scene():
    return generate_scene(SceneSpec(seed=11, point_count=20_000))


@pytest.fixture(scope="session")
def expert(small_scene):
    raw, _ = generate_demonstration(small_scene, DemoSpec(seed=5))
    return preprocess(raw)


@pytest.fixture()
def small_env(small_scene, expert):
    return SceneEnvironment(small_scene, expert, EnvConfig(obs_width=40, obs_height=32))


def straight_raw(length=10.0, n=11, angles=(0.0, 0.0, 0.0)):
    from scopesim.trajectory import RawTrajectory

    p = np.zeros((n, 6))
    p[:, 0] = np.linspace(0.0, length, n)
    p[:, 3:] = angles
    return RawTrajectory(p, np.linspace(0, 1, n))
