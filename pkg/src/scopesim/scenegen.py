"""Procedural cavity scenes and synthetic expert demonstrations.

A scene is a bowl-shaped textured surface (a spherical cap around +Z with
smooth radial noise) seen from near its centre, with one or more bright
landmark blobs standing in for instruments. An expert demonstration moves
the camera along a minimum-jerk path to a pose that frames the target
landmark (landmark 0) at the image centre and a fixed depth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose, look_at_rotation, pose_to_euler
from .renderer import CameraIntrinsics, PointCloudScene, render
from .trajectory import RawTrajectory

DEG = math.pi / 180.0

TARGET_COLOR = np.array([0.15, 0.85, 0.30])
DISTRACTOR_COLORS = np.array([[0.20, 0.35, 0.95], [0.95, 0.90, 0.20], [0.90, 0.20, 0.90]])


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    point_count: int = 100_000
    radius_range: tuple[float, float] = (30.0, 40.0)
    cap_angle: float = 60 * DEG
    radial_noise: float = 0.06
    landmark_count: int = 1
    landmark_radius_range: tuple[float, float] = (2.5, 3.5)
    landmark_height: float = 1.0
    landmark_max_angle: float = 20 * DEG
    texture_scale: float = 6.0
    gravity_shading: float = 0.3

    def __post_init__(self):
        if self.point_count < 1000:
            raise ValueError("point_count must be >= 1000")
        lo, hi = self.radius_range
        if not (0 < lo <= hi):
            raise ValueError("radius_range must be positive and ordered")
        a, b = self.landmark_radius_range
        if not (0 < a <= b):
            raise ValueError("landmark_radius_range must be positive and ordered")
        if self.landmark_count < 1:
            raise ValueError("need at least one landmark")


@dataclass(frozen=True)
class DemoSpec:
    """Expert demonstration knobs; ``goal_depth`` is the camera-to-landmark distance at the goal."""

    seed: int = 0
    path_length_range: tuple[float, float] = (8.0, 14.0)
    goal_depth: float = 16.0
    approach_cone: float = 30 * DEG
    samples: int = 30
    duration: float = 0.5
    jitter_pos: float = 0.05
    jitter_rot: float = 0.1 * DEG
    retries: int = 50

    def __post_init__(self):
        lo, hi = self.path_length_range
        if not (0 < lo <= hi):
            raise ValueError("path_length_range must be positive and ordered")
        if self.jitter_pos < 0 or self.jitter_rot < 0:
            raise ValueError("jitter must be non-negative")
        if self.samples < 2:
            raise ValueError("need at least 2 samples")


def _smooth_field(rng: np.random.Generator, octaves: int, base_freq: float, dims: int = 3):
    """Random sum of plane waves with 1/f amplitudes; returns f(points) -> values in about [-1, 1]."""
    waves = []
    for o in range(octaves):
        freq = base_freq * 2.0**o
        for _ in range(4):
            k = rng.normal(size=dims)
            k *= freq / np.linalg.norm(k)
            waves.append((k, rng.uniform(0, 2 * math.pi), 0.5**o))
    total = sum(w[2] for w in waves)

    def f(p):
        acc = np.zeros(len(p))
        for k, ph, amp in waves:
            acc += amp * np.sin(p @ k + ph)
        return acc / total * 2.0

    return f


def _cap_directions(rng: np.random.Generator, n: int, cap_angle: float) -> np.ndarray:
    cos_t = rng.uniform(math.cos(cap_angle), 1.0, n)
    sin_t = np.sqrt(1.0 - cos_t**2)
    phi = rng.uniform(0, 2 * math.pi, n)
    return np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=1)


def generate_scene(spec: SceneSpec) -> PointCloudScene:
    rng = np.random.default_rng(spec.seed)
    R = rng.uniform(*spec.radius_range)
    radial = _smooth_field(rng, 2, 1.5)
    dirs = _cap_directions(rng, spec.point_count, spec.cap_angle)
    r = R * (1.0 + spec.radial_noise * radial(dirs))

    tex = _smooth_field(rng, 4, 1.0 / spec.texture_scale)
    vessels = _smooth_field(rng, 2, 1.0 / (1.5 * spec.texture_scale))
    base = np.array([0.78, 0.36, 0.33]) * rng.uniform(0.85, 1.1, 3)
    pts = dirs * r[:, None]
    t = tex(pts)
    colors = base[None, :] * (1.0 + 0.25 * t[:, None])
    vein = np.exp(-(vessels(pts) / 0.12) ** 2)
    colors = colors * (1.0 - 0.45 * vein[:, None]) + 0.45 * vein[:, None] * np.array([0.45, 0.08, 0.12])
    # the dependent side (world +Y, image-down at the goal) is darker: a world-fixed orientation cue
    colors *= (1.0 - spec.gravity_shading * pts[:, 1:2] / R)

    landmarks = []
    for li in range(spec.landmark_count):
        ldir = _cap_directions(rng, 1, spec.landmark_max_angle)[0]
        rad = rng.uniform(*spec.landmark_radius_range)
        r_l = R * (1.0 + spec.radial_noise * radial(ldir[None, :])[0])
        centre = ldir * r_l
        ang = np.arccos(np.clip(dirs @ ldir, -1.0, 1.0))
        lateral = ang * r
        inside = lateral < rad
        bump = spec.landmark_height * np.sqrt(np.clip(1.0 - (lateral[inside] / rad) ** 2, 0.0, 1.0))
        pts[inside] -= dirs[inside] * bump[:, None]
        col = TARGET_COLOR if li == 0 else DISTRACTOR_COLORS[(li - 1) % len(DISTRACTOR_COLORS)]
        shade = 1.0 + 0.08 * t[inside]
        colors[inside] = np.clip(col[None, :] * shade[:, None], 0, 1)
        landmarks.append([*(centre - ldir * spec.landmark_height), rad])

    # round through float32 so the written scene file reproduces this scene exactly
    pts = pts.astype(np.float32).astype(np.float64)
    return PointCloudScene(pts, np.clip(colors, 0, 1), f"scene{spec.seed}", np.array(landmarks))


def minimum_jerk(s: np.ndarray) -> np.ndarray:
    return 10 * s**3 - 15 * s**4 + 6 * s**5


def project(point, pose: Pose, intr: CameraIntrinsics) -> tuple[float, float, float]:
    c = pose.rotation.T @ (np.asarray(point, dtype=np.float64) - pose.translation)
    return intr.fx * c[0] / c[2] + intr.cx, intr.fy * c[1] / c[2] + intr.cy, float(c[2])


def goal_pose(scene: PointCloudScene, depth: float, landmark: int = 0) -> Pose:
    """Camera on the line from the cavity centre to the landmark, looking at it from ``depth`` mm."""
    centre = scene.landmarks[landmark, :3]
    fwd = centre / np.linalg.norm(centre)
    return Pose(look_at_rotation(fwd), centre - depth * fwd)


def landmark_framed(scene: PointCloudScene, pose: Pose, intr: CameraIntrinsics, landmark: int = 0, window: float = 0.2) -> bool:
    """Landmark centre inside the central ``window`` fraction of the image and visible there."""
    u, v, z = project(scene.landmarks[landmark, :3], pose, intr)
    if z <= 0:
        return False
    if abs(u - intr.cx) > window * intr.width / 2 or abs(v - intr.cy) > window * intr.height / 2:
        return False
    img = render(scene, pose, intr, 1)
    ui, vi = int(math.floor(u + 0.5)), int(math.floor(v + 0.5))
    # splat holes are common at full resolution, so judge a 5x5 patch around the projected centre
    win = (slice(max(vi - 2, 0), vi + 3), slice(max(ui - 2, 0), ui + 3))
    hit = img.depth[win] > 0
    if not hit.any():
        return False
    col = TARGET_COLOR if landmark == 0 else DISTRACTOR_COLORS[(landmark - 1) % len(DISTRACTOR_COLORS)]
    return bool(np.linalg.norm(img.rgb[win][hit].mean(axis=0) - col) < 0.3)


def _landmark_in_view(scene, pose, intr, margin: float = 0.15) -> bool:
    u, v, z = project(scene.landmarks[0, :3], pose, intr)
    return z > 0 and margin * intr.width < u < (1 - margin) * intr.width and margin * intr.height < v < (1 - margin) * intr.height


def generate_demonstration(scene: PointCloudScene, spec: DemoSpec, intrinsics: CameraIntrinsics | None = None) -> tuple[RawTrajectory, Pose]:
    """Noisy minimum-jerk camera path ending at a pose that frames the target landmark."""
    if scene.landmarks is None or len(scene.landmarks) == 0:
        raise GenerationError("scene has no landmarks")
    intr = intrinsics or CameraIntrinsics.default()
    rng = np.random.default_rng(spec.seed)
    goal = goal_pose(scene, spec.goal_depth)
    if not landmark_framed(scene, goal, intr):
        raise GenerationError("target landmark is not visible from the goal pose")
    back = -goal.rotation[:, 2]
    for _ in range(spec.retries):
        length = rng.uniform(*spec.path_length_range)
        # direction in a cone around "backwards", so the start sees the landmark from farther away
        theta = math.acos(rng.uniform(math.cos(spec.approach_cone), 1.0))
        phi = rng.uniform(0, 2 * math.pi)
        local = np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), -math.cos(theta)])
        d = goal.rotation @ local
        start = Pose(goal.rotation, goal.translation + length * d)
        if _landmark_in_view(scene, start, intr) and np.dot(d, back) > 0:
            break
    else:
        raise GenerationError(f"no start pose sees the landmark after {spec.retries} tries")

    e_goal = pose_to_euler(goal).as_array()
    e_start = pose_to_euler(start).as_array()
    s = np.linspace(0.0, 1.0, spec.samples)
    prof = minimum_jerk(s)
    poses = np.empty((spec.samples, 6))
    poses[:, :3] = e_start[None, :3] + prof[:, None] * (e_goal[:3] - e_start[:3])[None, :]
    poses[:, 3:] = e_start[None, 3:] + s[:, None] * (e_goal[3:] - e_start[3:])[None, :]
    if spec.jitter_pos > 0 or spec.jitter_rot > 0:
        poses[:, :3] += rng.normal(0.0, spec.jitter_pos, (spec.samples, 3))
        poses[:, 3:] += rng.normal(0.0, spec.jitter_rot, (spec.samples, 3))
    return RawTrajectory(poses, s * spec.duration), goal


def cavity_center_pose() -> Pose:
    return Pose.identity()
