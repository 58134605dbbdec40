"""Shape-preserving trajectory augmentation.

An expert waypoint trajectory is expanded into variants that start from a
pose sampled in a small box around the beginning of the trajectory and
decay exponentially onto the expert path, ending next to its endpoint.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import EulerPose
from .trajectory import WaypointTrajectory

DEG = math.pi / 180.0


@dataclass(frozen=True, eq=False)
class Workspace:
    min_corner: np.ndarray
    max_corner: np.ndarray
    orientation_range: np.ndarray = field(default_factory=lambda: np.full(3, 3 * DEG))

    def __post_init__(self):
        lo = np.array(self.min_corner, dtype=np.float64).reshape(3)
        hi = np.array(self.max_corner, dtype=np.float64).reshape(3)
        rng = np.array(self.orientation_range, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise ValueError("min_corner must not exceed max_corner")
        if np.any(rng < 0):
            raise ValueError("orientation_range must be non-negative")
        for name, a in (("min_corner", lo), ("max_corner", hi), ("orientation_range", rng)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def contains(self, position, tol: float = 1e-9) -> bool:
        p = np.asarray(position, dtype=np.float64)
        return bool(np.all(p >= self.min_corner - tol) and np.all(p <= self.max_corner + tol))

    @property
    def size(self) -> np.ndarray:
        return self.max_corner - self.min_corner


@dataclass(frozen=True)
class AugmentationParams:
    """Knobs for SPTA.

    ``gamma_decay=None`` means ``-5 / L`` for a reference segment of L steps.
    ``epsilon_range`` bounds the dimensionless endpoint tolerance.
    """

    rate: int = 32
    epsilon_range: tuple[float, float] = (1e-3, 0.05)
    gamma_decay: float | None = None
    cube_margin: float = 0.5
    k_fraction: float = 0.2
    orientation_range: float = 3 * DEG
    max_resample: int = 50

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("rate must be >= 0")
        lo, hi = self.epsilon_range
        if not (0 < lo <= hi <= 0.05):
            raise ValueError("epsilon_range must lie within (0, 0.05]")
        if self.gamma_decay is not None and not self.gamma_decay < 0:
            raise ValueError("gamma_decay must be negative")
        if self.cube_margin < 0 or self.orientation_range < 0:
            raise ValueError("margins must be non-negative")
        if not 0 < self.k_fraction <= 1:
            raise ValueError("k_fraction must be in (0, 1]")


def k_choices(n: int, k_fraction: float) -> np.ndarray:
    return np.arange(2, max(2, math.ceil(k_fraction * n)) + 1)


def workspace_from_trajectory(w: WaypointTrajectory, params: AugmentationParams, rng: np.random.Generator | None = None, k: int | None = None) -> Workspace:
    """Inflated bounding box of the first ``k`` waypoint positions.

    ``k`` is drawn uniformly from ``{2, ..., max(2, ceil(k_fraction n))}``
    unless given.
    """
    n = len(w)
    if n < 2:
        raise ValueError("workspace needs a trajectory with >= 2 waypoints")
    if k is None:
        k = int(rng.choice(k_choices(n, params.k_fraction)))
    k = min(k, n)
    pts = w.positions[:k]
    m = params.cube_margin
    return Workspace(pts.min(axis=0) - m, pts.max(axis=0) + m, np.full(3, params.orientation_range))


def sample_start(ws: Workspace, expert_start: EulerPose, rng: np.random.Generator) -> EulerPose:
    """Uniform position in the box; expert orientation plus a uniform per-angle perturbation."""
    u = rng.random(6)
    pos = ws.min_corner + u[:3] * (ws.max_corner - ws.min_corner)
    ang = expert_start.angles + (2.0 * u[3:] - 1.0) * ws.orientation_range
    return EulerPose(*pos, *ang)


def closest_waypoint(S: EulerPose, w: WaypointTrajectory) -> tuple[int, float]:
    """Index and distance of the waypoint nearest to ``S`` in position; ties go to the lower index."""
    d = np.linalg.norm(w.positions - S.position, axis=1)
    j = int(np.argmin(d))
    return j, float(d[j])


def decay_coefficients(dist: float, epsilon: float, gamma: float, L: int) -> tuple[float, float]:
    """k1, k2 with k1 + k2 = dist and k1 exp(gamma L) + k2 = epsilon dist."""
    # -expm1(gamma L) = 1 - exp(gamma L), accurate for small |gamma L|
    k1 = dist * (1.0 - epsilon) / -math.expm1(gamma * L)
    return k1, dist - k1


def decay_schedule(epsilon: float, gamma: float, L: int) -> np.ndarray:
    """Offset profile for unit initial distance: 1 at step 0, epsilon at step L."""
    k1, k2 = decay_coefficients(1.0, epsilon, gamma, L)
    return k1 * np.exp(gamma * np.arange(L + 1)) + k2


@dataclass(frozen=True, eq=False)
class AugmentResult:
    trajectory: WaypointTrajectory
    j_star: int
    dist: float
    epsilon: float
    gamma: float


def augment(w: WaypointTrajectory, S: EulerPose, params: AugmentationParams, rng: np.random.Generator, epsilon: float | None = None) -> AugmentResult:
    """Bend the reference segment W[j*:] so it starts next to ``S``.

    Waypoint offsets ``(1 - eps) * de_j`` shrink from ``dist`` at the start
    to ``eps * dist`` at the end along the fixed direction from W[j*] to S;
    each angle follows the same profile with its own initial difference.
    """
    j_star, dist = closest_waypoint(S, w)
    end = len(w) - 1
    L = end - j_star
    if L < 1:
        raise ValueError("closest waypoint is the trajectory end; reference segment is a single point")
    if epsilon is None:
        epsilon = float(rng.uniform(*params.epsilon_range))
    gamma = params.gamma_decay if params.gamma_decay is not None else -5.0 / L

    ref = w.poses[j_star:]
    prof = decay_schedule(epsilon, gamma, L)
    out = ref.copy()
    if dist > 0:
        u = (S.position - ref[0, :3]) / dist
        out[:, :3] += ((1.0 - epsilon) * dist * prof)[:, None] * u[None, :]
    dang = S.angles - ref[0, 3:]
    if np.any(dang != 0):
        out[:, 3:] += (1.0 - epsilon) * prof[:, None] * dang[None, :]
    meta = dict(w.meta)
    meta.update(epsilon=epsilon, gamma=gamma, j_star=j_star)
    return AugmentResult(WaypointTrajectory(out, w.d_fixed, meta), j_star, dist, epsilon, gamma)


def _steps_within(traj: WaypointTrajectory, pos_limit: float, rot_limit: float) -> bool:
    from .trajectory import check_action_range

    return all(check_action_range(a, pos_limit, rot_limit) for a in traj.actions())


def augment_dataset(
    demos: list[WaypointTrajectory],
    params: AugmentationParams,
    rng: np.random.Generator | int,
    step_limits: tuple[float, float] | None = None,
) -> list[WaypointTrajectory]:
    """Original demonstrations plus ``rate`` augmented variants of each.

    Every demonstration gets its own generator split from ``rng`` so the
    output does not depend on processing order. With ``step_limits`` =
    (mm, rad), draws whose steps exceed the action range are redrawn.
    """
    seq = rng if isinstance(rng, (int, np.integer)) else int(rng.integers(2**63))
    children = np.random.SeedSequence(seq).spawn(len(demos))
    out: list[WaypointTrajectory] = []
    for w, child in zip(demos, children):
        out.append(w)
        out.extend(augment_one(w, params, np.random.default_rng(child), step_limits))
    return out


def augment_one(w: WaypointTrajectory, params: AugmentationParams, rng: np.random.Generator, step_limits=None) -> list[WaypointTrajectory]:
    start = EulerPose.from_array(w.poses[0])
    res = []
    for r in range(params.rate):
        for attempt in range(params.max_resample):
            ws = workspace_from_trajectory(w, params, rng)
            S = sample_start(ws, start, rng)
            try:
                a = augment(w, S, params, rng)
            except ValueError:
                continue
            if step_limits is None or _steps_within(a.trajectory, *step_limits):
                break
        else:
            raise RuntimeError(f"no feasible augmentation after {params.max_resample} draws")
        meta = dict(a.trajectory.meta)
        meta.update(k_box=[*np.round(ws.min_corner, 6), *np.round(ws.max_corner, 6)], variant=r + 1)
        res.append(WaypointTrajectory(a.trajectory.poses, w.d_fixed, meta))
    return res


def discrete_frechet(a: np.ndarray, b: np.ndarray) -> float:
    """Discrete Frechet distance between two point sequences (dynamic programme)."""
    n, m = len(a), len(b)
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    ca = np.empty((n, m))
    ca[0, 0] = d[0, 0]
    for i in range(1, n):
        ca[i, 0] = max(ca[i - 1, 0], d[i, 0])
    for j in range(1, m):
        ca[0, j] = max(ca[0, j - 1], d[0, j])
    for i in range(1, n):
        for j in range(1, m):
            ca[i, j] = max(min(ca[i - 1, j], ca[i - 1, j - 1], ca[i, j - 1]), d[i, j])
    return float(ca[-1, -1])


def shape_similarity(aug: np.ndarray, ref: np.ndarray) -> float:
    """Mean cosine similarity of per-step displacement vectors."""
    da = np.diff(aug[:, :3], axis=0)
    dr = np.diff(ref[:, :3], axis=0)
    na = np.linalg.norm(da, axis=1)
    nr = np.linalg.norm(dr, axis=1)
    ok = (na > 0) & (nr > 0)
    if not np.any(ok):
        return 1.0
    cos = np.sum(da[ok] * dr[ok], axis=1) / (na[ok] * nr[ok])
    return float(cos.mean())
