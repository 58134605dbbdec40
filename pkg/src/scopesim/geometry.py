"""Rigid camera poses, Euler angles and relative actions.

Conventions used throughout the package:

* lengths in millimetres, angles in radians;
* Euler angles are intrinsic rotations about X, then Y, then Z, so that
  ``R(alpha, beta, gamma) = Rx(alpha) @ Ry(beta) @ Rz(gamma)``;
* a :class:`Pose` maps camera coordinates to world coordinates, and the
  camera looks along its own +Z axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHO_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform with a 3x3 rotation and a translation in mm."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = _frozen(self.rotation)
        t = _frozen(self.translation).reshape(3)
        if R.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {R.shape}")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("pose entries must be finite")
        # loose construction check; is_valid() applies the strict 1e-9 tolerance
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-6) or np.linalg.det(R) < 0:
            raise ValueError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T) -> "Pose":
        T = np.asarray(T, dtype=np.float64)
        return cls(T[:3, :3], T[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def is_valid(self, tol: float = ORTHO_TOL) -> bool:
        R = self.rotation
        return bool(
            np.all(np.isfinite(R))
            and np.all(np.isfinite(self.translation))
            and np.allclose(R.T @ R, np.eye(3), atol=tol)
            and abs(np.linalg.det(R) - 1.0) <= tol
        )

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, atol=atol)
            and np.allclose(self.translation, other.translation, atol=atol)
        )

    def __repr__(self):
        return f"Pose(t={np.round(self.translation, 6).tolist()}, R={np.round(self.rotation, 6).tolist()})"


@dataclass(frozen=True)
class EulerPose:
    """Six-number pose: position in mm and intrinsic X-Y-Z angles in radians."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    @classmethod
    def from_array(cls, a) -> "EulerPose":
        a = np.asarray(a, dtype=np.float64).reshape(6)
        return cls(*(float(v) for v in a))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.alpha, self.beta, self.gamma])

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def angles(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma])


@dataclass(frozen=True)
class Action:
    """Camera motion expressed in the current camera frame (mm, radians)."""

    dx: float = 0.0
    dy: float = 0.0
    dz: float = 0.0
    dalpha: float = 0.0
    dbeta: float = 0.0
    dgamma: float = 0.0

    @classmethod
    def from_array(cls, a) -> "Action":
        a = np.asarray(a, dtype=np.float64).reshape(6)
        return cls(*(float(v) for v in a))

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz, self.dalpha, self.dbeta, self.dgamma])

    def as_pose(self) -> Pose:
        return euler_to_pose(EulerPose(*self.as_array()))

    def normalized(self, limits) -> np.ndarray:
        """Scale by per-component physical ``limits`` into [-1, 1] units."""
        return self.as_array() / np.asarray(limits, dtype=np.float64)

    @classmethod
    def from_normalized(cls, a, limits) -> "Action":
        a = np.clip(np.asarray(a, dtype=np.float64).reshape(6), -1.0, 1.0)
        return cls.from_array(a * np.asarray(limits, dtype=np.float64))


def rotation_from_euler(alpha: float, beta: float, gamma: float) -> np.ndarray:
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]])
    Ry = np.array([[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]])
    Rz = np.array([[cg, -sg, 0.0], [sg, cg, 0.0], [0.0, 0.0, 1.0]])
    return Rx @ Ry @ Rz


def euler_from_rotation(R) -> tuple[float, float, float]:
    """Invert :func:`rotation_from_euler`.

    At gimbal lock (``|beta| = pi/2``) only ``alpha + gamma`` is defined;
    ``gamma`` is then set to zero.
    """
    R = np.asarray(R, dtype=np.float64)
    sb = float(np.clip(R[0, 2], -1.0, 1.0))
    beta = float(np.arcsin(sb))
    if abs(sb) < 1.0 - 1e-12:
        alpha = float(np.arctan2(-R[1, 2], R[2, 2]))
        gamma = float(np.arctan2(-R[0, 1], R[0, 0]))
    else:
        alpha = float(np.arctan2(R[2, 1], R[1, 1]))
        gamma = 0.0
    return alpha, beta, gamma


def euler_to_pose(e: EulerPose) -> Pose:
    return Pose(rotation_from_euler(e.alpha, e.beta, e.gamma), [e.x, e.y, e.z])


def pose_to_euler(p: Pose) -> EulerPose:
    alpha, beta, gamma = euler_from_rotation(p.rotation)
    x, y, z = p.translation
    return EulerPose(float(x), float(y), float(z), alpha, beta, gamma)


def compose(a: Pose, b: Pose) -> Pose:
    """``a`` followed by ``b`` expressed in ``a``'s frame (matrix product a.b)."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(p: Pose) -> Pose:
    Rt = p.rotation.T
    return Pose(Rt, -Rt @ p.translation)


def relative_action(current: Pose, next: Pose) -> Action:
    """Action taking ``current`` to ``next``: ``inv(current) . next`` as six numbers."""
    e = pose_to_euler(compose(inverse(current), next))
    return Action(*e.as_array())


def apply_action(current: Pose, action: Action) -> Pose:
    return compose(current, action.as_pose())


def rotation_geodesic(a, b) -> float:
    """Angle in [0, pi] of the relative rotation ``a @ b.T``.

    Equal to ``arccos(clip((tr(a b^T) - 1) / 2))``; evaluated as atan2 of the
    antisymmetric and trace parts, which stays accurate near 0 and pi.
    """
    a = a.rotation if isinstance(a, Pose) else np.asarray(a, dtype=np.float64)
    b = b.rotation if isinstance(b, Pose) else np.asarray(b, dtype=np.float64)
    M = a @ b.T
    c = (np.trace(M) - 1.0) / 2.0
    s = 0.5 * np.linalg.norm([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
    return float(np.arctan2(s, np.clip(c, -1.0, 1.0)))


def position_distance(a: Pose, b: Pose) -> float:
    return float(np.linalg.norm(a.translation - b.translation))


def look_at_rotation(forward, down_hint=(0.0, 1.0, 0.0)) -> np.ndarray:
    """Rotation whose +Z column points along ``forward``; camera +Y leans to ``down_hint``.

    ``forward = +Z`` with the default hint gives the identity.
    """
    z = np.asarray(forward, dtype=np.float64)
    z = z / np.linalg.norm(z)
    down = np.asarray(down_hint, dtype=np.float64)
    if abs(float(np.dot(down, z))) > 0.99:
        down = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.99 else np.array([1.0, 0.0, 0.0])
    x = np.cross(down, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1)
