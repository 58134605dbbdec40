"""Episodic camera-control environment over a point-cloud scene.

The agent sees an RGB-D rendering from its current camera pose and moves
the camera by a normalized 6-vector in [-1, 1] (scaled to +-1.5 mm and
+-3 degrees in the camera frame). An episode ends when the camera is
within 2 mm and 5 degrees of the expert endpoint or after 16 steps. There
is no scalar reward; learning signals come from the discriminator.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .geometry import Action, EulerPose, Pose, compose, euler_to_pose, position_distance, rotation_geodesic
from .renderer import CameraIntrinsics, PointCloudScene, RGBDImage, read_scene, render
from .spta import AugmentationParams, Workspace, k_choices, sample_start, workspace_from_trajectory
from .trajectory import WaypointTrajectory, read_waypoints

DEG = math.pi / 180.0


@dataclass(frozen=True)
class EnvConfig:
    pos_threshold: float = 2.0
    rot_threshold: float = 5 * DEG
    max_steps: int = 16
    pos_action_limit: float = 1.5
    rot_action_limit: float = 3 * DEG
    observe_depth: bool = True
    obs_width: int = 80
    obs_height: int = 64
    splat_radius: int = 1
    depth_scale: float = 50.0

    def __post_init__(self):
        for name in ("pos_threshold", "rot_threshold", "pos_action_limit", "rot_action_limit", "depth_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.obs_width < 1 or self.obs_height < 1 or self.splat_radius < 0:
            raise ValueError("bad observation settings")

    @property
    def limits(self) -> np.ndarray:
        p, r = self.pos_action_limit, self.rot_action_limit
        return np.array([p, p, p, r, r, r])

    @property
    def obs_shape(self) -> tuple[int, int, int]:
        return (4, self.obs_height, self.obs_width)

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown env config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


class EpisodeDoneError(RuntimeError):
    """step() called on a finished episode."""


class EnvError(RuntimeError):
    def __init__(self, index: int, exc: BaseException):
        super().__init__(f"environment {index}: {exc!r}")
        self.index = index
        self.__cause__ = exc


@dataclass
class EpisodeState:
    current_pose: Pose
    goal_pose: Pose
    start_pose: Pose
    step_count: int = 0
    done: bool = False
    success: bool = False
    poses: list = field(default_factory=list)
    actions: list = field(default_factory=list)


def default_workspace(expert: WaypointTrajectory, params: AugmentationParams | None = None) -> Workspace:
    """Start region for resets: the largest SPTA box (k at its maximum)."""
    params = params or AugmentationParams()
    k = int(k_choices(len(expert), params.k_fraction)[-1])
    return workspace_from_trajectory(expert, params, k=k)


class SceneEnvironment:
    """One scene, one expert trajectory, one episode at a time (not thread-safe)."""

    def __init__(
        self,
        scene: PointCloudScene,
        expert: WaypointTrajectory,
        config: EnvConfig | None = None,
        workspace: Workspace | None = None,
        scene_id: str | None = None,
        intrinsics: CameraIntrinsics | None = None,
    ):
        self.scene = scene
        self.expert = expert
        self.config = config or EnvConfig()
        self.workspace = workspace or default_workspace(expert)
        self.scene_id = scene_id or scene.name
        self.intrinsics = intrinsics or CameraIntrinsics.default(self.config.obs_width, self.config.obs_height)
        self.goal_pose = expert.pose(len(expert) - 1)
        self.expert_start = EulerPose.from_array(expert.poses[0])
        self.state: EpisodeState | None = None
        self._rng = np.random.default_rng()

    def observe_pose(self, pose: Pose) -> RGBDImage:
        img = render(self.scene, pose, self.intrinsics, self.config.splat_radius)
        return img if self.config.observe_depth else img.without_depth()

    def obs_array(self, img: RGBDImage) -> np.ndarray:
        return img.to_array(self.config.depth_scale)

    def reset(self, seed: int | None = None, start: Pose | None = None) -> RGBDImage:
        """Sample a start pose in the workspace (or use ``start``) and render it."""
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        if start is None:
            start = euler_to_pose(sample_start(self.workspace, self.expert_start, self._rng))
        self.state = EpisodeState(start, self.goal_pose, start, poses=[start])
        return self.observe_pose(start)

    def deviation(self, pose: Pose | None = None) -> tuple[float, float]:
        pose = pose or self.state.current_pose
        return position_distance(pose, self.goal_pose), rotation_geodesic(pose.rotation, self.goal_pose.rotation)

    def step(self, normalized_action) -> tuple[RGBDImage, bool, dict]:
        st = self.state
        if st is None:
            raise EpisodeDoneError("reset() must be called before step()")
        if st.done:
            raise EpisodeDoneError("episode is over; call reset()")
        a = np.clip(np.asarray(normalized_action, dtype=np.float64).reshape(6), -1.0, 1.0)
        action = Action.from_array(a * self.config.limits)
        st.current_pose = compose(st.current_pose, action.as_pose())
        st.step_count += 1
        st.poses.append(st.current_pose)
        st.actions.append(action)
        dp, dr = self.deviation()
        st.success = dp < self.config.pos_threshold and dr < self.config.rot_threshold
        st.done = st.success or st.step_count >= self.config.max_steps
        info = {"success": st.success, "delta_p": dp, "delta_r": dr, "steps": st.step_count}
        return self.observe_pose(st.current_pose), st.done, info


class VectorEnv:
    """Fixed set of environments stepped together; optionally on worker threads.

    Each slot's trace is exactly what stepping that environment alone
    would give, whatever the number of workers.
    """

    def __init__(self, envs: list[SceneEnvironment], workers: int = 1):
        if not envs:
            raise ValueError("VectorEnv needs at least one environment")
        self.envs = list(envs)
        self.workers = max(1, int(workers))

    def __len__(self):
        return len(self.envs)

    def _map(self, fn, args):
        def call(i):
            try:
                return fn(self.envs[i], args[i])
            except Exception as exc:  # tag the failing slot
                raise EnvError(i, exc) from exc

        idx = range(len(self.envs))
        if self.workers == 1:
            return [call(i) for i in idx]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(call, idx))

    def reset_all(self, seeds=None) -> list[RGBDImage]:
        seeds = list(seeds) if seeds is not None else [None] * len(self.envs)
        return self._map(lambda env, s: env.reset(s), seeds)

    def step_all(self, actions) -> list[tuple[RGBDImage, bool, dict]]:
        actions = np.asarray(actions, dtype=np.float64).reshape(len(self.envs), 6)
        return self._map(lambda env, a: env.step(a), actions)

    def reset_one(self, i: int, seed=None) -> RGBDImage:
        try:
            return self.envs[i].reset(seed)
        except Exception as exc:
            raise EnvError(i, exc) from exc


def make_vector_env(envs: list[SceneEnvironment], workers: int = 1) -> VectorEnv:
    return VectorEnv(envs, workers)


# --- manifests -----------------------------------------------------------------

def write_manifest(path, entries: list[dict], extra: dict | None = None) -> None:
    """Environment manifest: JSON with an ``environments`` list of
    ``{"id", "scene", "trajectory", "config"}`` (paths relative to the file)."""
    doc = {"format": "scopesim-manifest/1", **(extra or {}), "environments": entries}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")


def read_manifest(path) -> list[dict]:
    path = Path(path)
    doc = json.loads(path.read_text())
    envs = doc.get("environments")
    if not isinstance(envs, list) or not envs:
        raise ValueError(f"{path}: manifest lists no environments")
    out = []
    for i, e in enumerate(envs):
        missing = {"scene", "trajectory"} - set(e)
        if missing:
            raise ValueError(f"{path}: environment {i} lacks {sorted(missing)}")
        out.append({
            "id": e.get("id", f"env{i}"),
            "scene": (path.parent / e["scene"]).resolve(),
            "trajectory": (path.parent / e["trajectory"]).resolve(),
            "config": dict(e.get("config", {})),
        })
    return out


def load_environments(path, config: EnvConfig | None = None, overrides: dict | None = None) -> list[SceneEnvironment]:
    """Build one environment per manifest entry; per-entry config overrides apply on top of ``config``."""
    base = config or EnvConfig()
    envs = []
    for e in read_manifest(path):
        cfg = replace(base, **{**e["config"], **(overrides or {})})
        scene = read_scene(e["scene"], name=e["id"])
        envs.append(SceneEnvironment(scene, read_waypoints(e["trajectory"]), cfg, scene_id=e["id"]))
    return envs
