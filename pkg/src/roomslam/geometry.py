"""Rigid-body poses and the small amount of Lie-group machinery the rest of
the package needs.

Poses are stored as translation + unit quaternion (x, y, z, w).  The optimizer
works with batched rotation matrices, axis-angle increments composed through
the exponential map, and the inverse right Jacobian of SO(3); those helpers
live here and are all vectorized over a leading batch dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

QUAT_NORM_TOL = 1e-9


def _skew(v: np.ndarray) -> np.ndarray:
    """Batched hat operator: (..., 3) -> (..., 3, 3) skew matrices."""
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape[:-1] + (3, 3))
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    out[..., 0, 1] = -z
    out[..., 0, 2] = y
    out[..., 1, 0] = z
    out[..., 1, 2] = -x
    out[..., 2, 0] = -y
    out[..., 2, 1] = x
    return out


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Axis-angle vectors (..., 3) -> rotation matrices (..., 3, 3)."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim == 1:
        return Rotation.from_rotvec(w).as_matrix()
    return Rotation.from_rotvec(w.reshape(-1, 3)).as_matrix().reshape(w.shape[:-1] + (3, 3))


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation matrices (..., 3, 3) -> axis-angle vectors (..., 3)."""
    R = np.asarray(R, dtype=np.float64)
    single = R.ndim == 2
    if single:
        return Rotation.from_matrix(R).as_rotvec()
    flat = Rotation.from_matrix(R.reshape(-1, 3, 3)).as_rotvec()
    return flat.reshape(R.shape[:-2] + (3,))


def so3_jr_inv(w: np.ndarray) -> np.ndarray:
    """Inverse right Jacobian of SO(3) at axis-angle w, batched.

    Jr_inv(w) = I + 0.5 [w]x + c(theta) [w]x^2 with
    c = 1/theta^2 - cot(theta/2) / (2 theta), c -> 1/12 as theta -> 0.
    """
    w = np.asarray(w, dtype=np.float64)
    theta = np.linalg.norm(w, axis=-1)
    S = _skew(w)
    c = np.empty_like(theta)
    small = theta < 1e-5
    ts = theta[small]
    c[small] = 1.0 / 12.0 + ts * ts / 720.0
    tb = theta[~small]
    c[~small] = 1.0 / tb**2 - 1.0 / (2.0 * tb * np.tan(tb / 2.0))
    eye = np.broadcast_to(np.eye(3), S.shape)
    return eye + 0.5 * S + c[..., None, None] * (S @ S)


@dataclass(frozen=True)
class SE3Pose:
    """Rigid transform: rotation (unit quaternion, xyzw) plus translation in
    meters.  Immutable; all operators return new poses."""

    translation: np.ndarray
    rotation: np.ndarray  # quaternion (x, y, z, w), unit norm

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3).copy()
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4).copy()
        norm = np.linalg.norm(q)
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {norm} too far from 1")
        q = q / norm
        t.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", q)

    @staticmethod
    def identity() -> "SE3Pose":
        return SE3Pose(np.zeros(3), np.array([0.0, 0.0, 0.0, 1.0]))

    @staticmethod
    def from_rt(R: np.ndarray, t: np.ndarray) -> "SE3Pose":
        q = Rotation.from_matrix(np.asarray(R, dtype=np.float64)).as_quat()
        return SE3Pose(t, q)

    @staticmethod
    def from_matrix(T: np.ndarray) -> "SE3Pose":
        T = np.asarray(T, dtype=np.float64)
        return SE3Pose.from_rt(T[:3, :3], T[:3, 3])

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation_matrix()
        T[:3, 3] = self.translation
        return T

    def rotation_matrix(self) -> np.ndarray:
        return Rotation.from_quat(self.rotation).as_matrix()

    def compose(self, other: "SE3Pose") -> "SE3Pose":
        """self * other (apply other first, then self)."""
        R = self.rotation_matrix()
        t = R @ other.translation + self.translation
        q = (Rotation.from_quat(self.rotation) * Rotation.from_quat(other.rotation)).as_quat()
        return SE3Pose(t, q)

    def inverse(self) -> "SE3Pose":
        Rinv = Rotation.from_quat(self.rotation).inv()
        return SE3Pose(-Rinv.apply(self.translation), Rinv.as_quat())

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points (..., 3) from the local frame to the parent frame."""
        pts = np.asarray(points, dtype=np.float64)
        return Rotation.from_quat(self.rotation).apply(pts.reshape(-1, 3)).reshape(pts.shape) \
            + self.translation

    def rotation_angle_to(self, other: "SE3Pose") -> float:
        """Geodesic angle in radians between the two orientations."""
        dq = Rotation.from_quat(self.rotation).inv() * Rotation.from_quat(other.rotation)
        return float(np.linalg.norm(dq.as_rotvec()))

    def __repr__(self):
        t = np.array2string(self.translation, precision=4, suppress_small=True)
        q = np.array2string(self.rotation, precision=4, suppress_small=True)
        return f"SE3Pose(t={t}, q={q})"


def look_at_rotation(forward: np.ndarray, up: np.ndarray = None) -> np.ndarray:
    """Camera rotation (camera-to-world) with z along `forward`, y pointing
    down-ish: the usual vision convention (x right, y down, z forward)."""
    f = np.asarray(forward, dtype=np.float64)
    n = np.linalg.norm(f)
    if n < 1e-12:
        raise ValueError("forward direction is zero")
    f = f / n
    if up is None:
        up = np.array([0.0, 0.0, 1.0])
    x = np.cross(f, up)
    nx = np.linalg.norm(x)
    if nx < 1e-9:  # looking straight up/down: pick an arbitrary right vector
        x = np.cross(f, np.array([1.0, 0.0, 0.0]))
        nx = np.linalg.norm(x)
    x = x / nx
    y = np.cross(f, x)
    R = np.stack([x, y, f], axis=1)
    if np.linalg.det(R) < 0:
        x = -x
        R = np.stack([x, y, f], axis=1)
    return R
