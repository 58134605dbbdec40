"""Expert trajectory preprocessing.

Raw camera trajectories are smoothed with a first-order Savitzky-Golay
filter, resampled into waypoints a fixed distance apart, and turned into
(state, action, next state) demonstration tuples by rendering each waypoint.

Trajectory files hold one pose per line, ``t x y z alpha beta gamma``
(seconds, mm, radians), preceded by ``# key: value`` header comments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from .geometry import Action, EulerPose, Pose, euler_to_pose, relative_action

if TYPE_CHECKING:
    from .env import SceneEnvironment
    from .renderer import RGBDImage

DEFAULT_D_FIXED = 1.0


class TrajectoryFormatError(ValueError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class ActionRangeError(ValueError):
    """A waypoint step exceeds the physical action range."""

    def __init__(self, index: int, action: Action, message: str):
        super().__init__(f"waypoint {index}: {message}")
        self.index = index
        self.action = action


def _as_pose_array(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        arr = np.array(points, dtype=np.float64)
    else:
        arr = np.array([p.as_array() if isinstance(p, EulerPose) else p for p in points], dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 6:
        raise ValueError(f"expected (m, 6) poses, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class RawTrajectory:
    """m >= 2 poses as an (m, 6) array of x, y, z, alpha, beta, gamma."""

    poses: np.ndarray
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        poses = _as_pose_array(self.poses)
        if len(poses) < 2:
            raise ValueError("a trajectory needs at least 2 points")
        if not np.all(np.isfinite(poses)):
            raise ValueError("trajectory contains non-finite values")
        poses.setflags(write=False)
        object.__setattr__(self, "poses", poses)
        if self.timestamps is not None:
            ts = np.array(self.timestamps, dtype=np.float64).reshape(-1)
            if len(ts) != len(poses):
                raise ValueError("timestamps and poses differ in length")
            ts.setflags(write=False)
            object.__setattr__(self, "timestamps", ts)

    def __len__(self):
        return len(self.poses)

    @property
    def points(self) -> list[EulerPose]:
        return [EulerPose.from_array(p) for p in self.poses]

    @property
    def positions(self) -> np.ndarray:
        return self.poses[:, :3]

    def path_length(self) -> float:
        return float(np.linalg.norm(np.diff(self.positions, axis=0), axis=1).sum())


@dataclass(frozen=True, eq=False)
class WaypointTrajectory:
    """Waypoints spaced ``d_fixed`` mm apart (the last segment may be shorter)."""

    poses: np.ndarray
    d_fixed: float = DEFAULT_D_FIXED
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        poses = _as_pose_array(self.poses)
        if len(poses) < 1:
            raise ValueError("empty waypoint trajectory")
        poses.setflags(write=False)
        object.__setattr__(self, "poses", poses)

    def __len__(self):
        return len(self.poses)

    @property
    def waypoints(self) -> list[EulerPose]:
        return [EulerPose.from_array(p) for p in self.poses]

    @property
    def positions(self) -> np.ndarray:
        return self.poses[:, :3]

    def pose(self, j: int) -> Pose:
        return euler_to_pose(EulerPose.from_array(self.poses[j]))

    def step_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.positions, axis=0), axis=1)

    def actions(self) -> list[Action]:
        return [relative_action(self.pose(j), self.pose(j + 1)) for j in range(len(self) - 1)]


@dataclass(frozen=True, eq=False)
class DemonstrationTuple:
    state: "RGBDImage"
    action: Action
    next_state: "RGBDImage"
    done: bool = False


def smooth(raw: RawTrajectory, window: int) -> RawTrajectory:
    """First-order Savitzky-Golay smoothing of every channel.

    Near the ends the window shrinks symmetrically, so the first and last
    poses are kept exactly. For a symmetric window a degree-1 least-squares
    fit evaluated at the centre is the window mean.
    """
    m = len(raw)
    if window % 2 == 0 or window < 3 or window > m:
        raise ValueError(f"window must be odd with 3 <= window <= {m}, got {window}")
    x = raw.poses
    csum = np.vstack([np.zeros((1, 6)), np.cumsum(x, axis=0)])
    idx = np.arange(m)
    half = np.minimum(window // 2, np.minimum(idx, m - 1 - idx))
    lo, hi = idx - half, idx + half + 1
    out = (csum[hi] - csum[lo]) / (hi - lo)[:, None]
    # pass-through where the window collapsed to one sample keeps exact values
    out[half == 0] = x[half == 0]
    return RawTrajectory(out, raw.timestamps)


def _sphere_exit(c: np.ndarray, a: np.ndarray, b: np.ndarray, d: float) -> float:
    """Parameter t in [0, 1] where a + t (b - a) leaves the ball |p - c| <= d."""
    v = b - a
    w = a - c
    A = float(v @ v)
    B = 2.0 * float(v @ w)
    C = float(w @ w) - d * d
    if A == 0.0:
        return 1.0
    disc = max(B * B - 4.0 * A * C, 0.0)
    return min(max((-B + math.sqrt(disc)) / (2.0 * A), 0.0), 1.0)


def resample_equal_distance(t: RawTrajectory, d_fixed: float = DEFAULT_D_FIXED, endpoint_tol: float = 1e-9) -> WaypointTrajectory:
    """Equally spaced waypoints along the positional path.

    From the previous waypoint, the first input point farther than
    ``d_fixed`` selects the segment to move along; the new waypoint is the
    point on that segment exactly ``d_fixed`` away, so waypoints stay on the
    piecewise-linear path. Angles are interpolated at the same path
    parameter. The expert endpoint is appended (or replaces a waypoint that
    already coincides with it).
    """
    if not d_fixed > 0:
        raise ValueError("d_fixed must be positive")
    P = t.poses
    pos = P[:, :3]
    total = t.path_length()
    if total < d_fixed:
        raise ValueError(f"path length {total:.6g} mm is shorter than d_fixed={d_fixed}")

    out = [P[0].copy()]
    seg = 0  # current waypoint lies on segment (seg, seg + 1)
    cur = P[0].copy()
    m = len(P)
    while True:
        dist = np.linalg.norm(pos[seg + 1 :] - cur[:3], axis=1)
        # a point sitting on the sphere up to rounding counts as beyond, so re-resampling is stable
        beyond = np.nonzero(dist > d_fixed * (1.0 - 1e-9))[0]
        if len(beyond) == 0:
            break
        i_star = seg + 1 + int(beyond[0])
        a_idx = i_star - 1
        a = cur if a_idx == seg else P[a_idx]
        s = _sphere_exit(cur[:3], a[:3], P[i_star, :3], d_fixed)
        new = a + s * (P[i_star] - a)
        # restore exact spacing lost to the quadratic solve
        step = new[:3] - cur[:3]
        n = np.linalg.norm(step)
        if n > 0:
            new[:3] = cur[:3] + step * (d_fixed / n)
        out.append(new)
        cur = new
        seg = a_idx
    end = P[m - 1].copy()
    scale = max(1.0, float(np.abs(end[:3]).max()))
    if len(out) > 1 and np.linalg.norm(out[-1][:3] - end[:3]) <= endpoint_tol * scale:
        out[-1] = end
    elif np.any(out[-1] != end):
        out.append(end)
    return WaypointTrajectory(np.array(out), d_fixed)


def check_action_range(action: Action, pos_limit: float, rot_limit: float, tol: float = 1e-9) -> bool:
    a = action.as_array()
    return bool(np.all(np.abs(a[:3]) <= pos_limit + tol) and np.all(np.abs(a[3:]) <= rot_limit + tol))


def extract_demonstrations(w: WaypointTrajectory, env: "SceneEnvironment") -> list[DemonstrationTuple]:
    """Render each waypoint and pair consecutive states with the relative action."""
    cfg = env.config
    actions = w.actions()
    for j, a in enumerate(actions):
        if not check_action_range(a, cfg.pos_action_limit, cfg.rot_action_limit):
            raise ActionRangeError(
                j, a, f"action {np.round(a.as_array(), 6).tolist()} exceeds "
                f"(+-{cfg.pos_action_limit} mm, +-{cfg.rot_action_limit:.6g} rad); d_fixed too large?"
            )
    states = [env.observe_pose(w.pose(j)) for j in range(len(w))]
    return [
        DemonstrationTuple(states[j], actions[j], states[j + 1], done=(j == len(actions) - 1))
        for j in range(len(actions))
    ]


# --- file format -------------------------------------------------------------

def _format_header_value(v: Any) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_trajectory(path, traj: RawTrajectory | WaypointTrajectory, header: dict | None = None) -> None:
    header = dict(header or {})
    if isinstance(traj, WaypointTrajectory):
        header.setdefault("d_fixed", traj.d_fixed)
        for k, v in traj.meta.items():
            header.setdefault(k, v)
    ts = getattr(traj, "timestamps", None)
    if ts is None:
        ts = np.arange(len(traj), dtype=np.float64)
    lines = ["# scopesim trajectory"]
    lines += [f"# {k}: {_format_header_value(v)}" for k, v in header.items()]
    for ti, p in zip(ts, traj.poses):
        lines.append(" ".join(repr(float(v)) for v in (ti, *p)))
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_header_value(s: str):
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return s


def read_trajectory(path) -> tuple[RawTrajectory, dict]:
    """Parse a trajectory file into a :class:`RawTrajectory` and its header."""
    header: dict = {}
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                k, v = body.split(":", 1)
                header[k.strip()] = _parse_header_value(v.strip())
            continue
        parts = line.split()
        if len(parts) != 7:
            raise TrajectoryFormatError(path, lineno, f"expected 7 fields, got {len(parts)}")
        try:
            row = [float(p) for p in parts]
        except ValueError as exc:
            raise TrajectoryFormatError(path, lineno, str(exc)) from None
        if not all(math.isfinite(v) for v in row):
            raise TrajectoryFormatError(path, lineno, "non-finite value")
        rows.append(row)
    if len(rows) < 2:
        raise TrajectoryFormatError(path, max(len(rows), 1), "a trajectory needs at least 2 poses")
    arr = np.array(rows)
    return RawTrajectory(arr[:, 1:], arr[:, 0]), header


def read_waypoints(path) -> WaypointTrajectory:
    raw, header = read_trajectory(path)
    d = float(header.pop("d_fixed", DEFAULT_D_FIXED))
    return WaypointTrajectory(raw.poses, d, header)
