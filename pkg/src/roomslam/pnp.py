"""Descriptor matching and RANSAC-P3P pose estimation for loop-closure
verification.

Given 3D points in one keyframe's camera frame and matched pixels in another
keyframe's image, the solver recovers the transform taking points from the
first camera frame into the second: exactly the relative-pose measurement a
loop edge needs.  Matching is mutual-nearest-neighbor over Hamming distance
on binary descriptors; the minimal solver is P3P inside a seeded RANSAC loop
with Gauss-Newton reprojection refinement on the inlier set.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .geometry import SE3Pose, _skew, so3_exp

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint16)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0 or self.width <= 0 or self.height <= 0:
            raise ValueError("invalid camera intrinsics")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def project(self, points_cam: np.ndarray) -> np.ndarray:
        """Pinhole projection of (n, 3) camera-frame points to (n, 2) pixels.
        Caller is responsible for checking depths."""
        p = np.asarray(points_cam, dtype=np.float64)
        z = p[:, 2]
        return np.stack([self.fx * p[:, 0] / z + self.cx,
                         self.fy * p[:, 1] / z + self.cy], axis=1)

    def in_bounds(self, pixels: np.ndarray) -> np.ndarray:
        u, v = pixels[:, 0], pixels[:, 1]
        return (u >= 0) & (u <= self.width - 1) & (v >= 0) & (v <= self.height - 1)


def hamming_distance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise Hamming distances between two (n, d) / (m, d) uint8
    descriptor arrays."""
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    x = np.bitwise_xor(a[:, None, :], b[None, :, :])
    return _POPCOUNT[x].sum(axis=2)


def match_mutual(desc_a: np.ndarray, desc_b: np.ndarray) -> list[tuple[int, int]]:
    """Mutual nearest-neighbor matches (index_a, index_b); ties resolve to the
    lowest index on both sides, so the result is deterministic."""
    if len(desc_a) == 0 or len(desc_b) == 0:
        return []
    D = hamming_distance_matrix(desc_a, desc_b)
    ab = np.argmin(D, axis=1)
    ba = np.argmin(D, axis=0)
    return [(i, int(j)) for i, j in enumerate(ab) if ba[j] == i]


def descriptors_array(features) -> np.ndarray:
    return np.frombuffer(b"".join(f.descriptor for f in features), dtype=np.uint8) \
        .reshape(len(features), -1)


@dataclass(frozen=True)
class PnpEstimate:
    pose: SE3Pose          # transform: points in the 3D frame -> query camera frame
    inliers: np.ndarray    # bool mask over the matches
    mean_reproj_px: float


def _score_pose(R: np.ndarray, t: np.ndarray, points: np.ndarray, pixels: np.ndarray,
                K: CameraIntrinsics, reproj_px: float) -> tuple[np.ndarray, np.ndarray]:
    p_cam = points @ R.T + t
    ok = p_cam[:, 2] > 1e-6
    err = np.full(len(points), np.inf)
    if np.any(ok):
        proj = K.project(p_cam[ok])
        err[ok] = np.linalg.norm(proj - pixels[ok], axis=1)
    return err < reproj_px, err


def refine_pose_gauss_newton(R: np.ndarray, t: np.ndarray, points: np.ndarray,
                             pixels: np.ndarray, K: CameraIntrinsics,
                             iters: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Minimize reprojection error over SE(3) from a P3P initial guess.
    Left-multiplicative increments: p_cam' = Exp(dw) p_cam + dt."""
    R = R.copy()
    t = t.copy()
    for _ in range(iters):
        p_cam = points @ R.T + t
        z = p_cam[:, 2]
        if np.any(z <= 1e-9):
            break
        proj = K.project(p_cam)
        res = (proj - pixels).ravel()
        # d(uv)/d(p_cam)
        Jp = np.zeros((len(points), 2, 3))
        Jp[:, 0, 0] = K.fx / z
        Jp[:, 0, 2] = -K.fx * p_cam[:, 0] / z**2
        Jp[:, 1, 1] = K.fy / z
        Jp[:, 1, 2] = -K.fy * p_cam[:, 1] / z**2
        # d(p_cam)/d[dt, dw]
        Jx = np.concatenate([np.broadcast_to(np.eye(3), (len(points), 3, 3)),
                             -_skew(p_cam)], axis=2)
        J = (Jp @ Jx).reshape(-1, 6)
        H = J.T @ J + 1e-9 * np.eye(6)
        g = J.T @ res
        try:
            dx = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            break
        dR = so3_exp(dx[3:])
        R = dR @ R
        t = dR @ t + dx[:3]
        if np.max(np.abs(dx)) < 1e-12:
            break
    return R, t


def ransac_p3p(points: np.ndarray, pixels: np.ndarray, K: CameraIntrinsics,
               reproj_px: float = 2.0, max_iters: int = 300,
               confidence: float = 0.999, seed: int = 0) -> PnpEstimate | None:
    """Seeded RANSAC with a P3P minimal solver and GN polish.

    `points` (n, 3) live in the frame the returned pose maps FROM; `pixels`
    (n, 2) are their observations in the camera the pose maps TO.  Returns
    None when no sample yields at least 3 inliers.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    pixels = np.ascontiguousarray(pixels, dtype=np.float64)
    n = len(points)
    if n < 3 or len(pixels) != n:
        return None
    rng = np.random.default_rng(seed)
    Kmat = K.matrix()

    best_inliers = None
    best_count = 0
    best_Rt = None
    iters_needed = max_iters
    it = 0
    while it < min(max_iters, iters_needed):
        it += 1
        sample = rng.choice(n, size=3, replace=False)
        obj = points[sample]
        img = pixels[sample]
        try:
            count, rvecs, tvecs = cv2.solveP3P(obj, img, Kmat, None,
                                               flags=cv2.SOLVEPNP_P3P)
        except cv2.error:
            continue
        for k in range(count):
            R = cv2.Rodrigues(rvecs[k])[0]
            t = tvecs[k].ravel()
            inl, _ = _score_pose(R, t, points, pixels, K, reproj_px)
            c = int(np.sum(inl))
            if c > best_count:
                best_count, best_inliers, best_Rt = c, inl, (R, t)
                w = c / n
                if w > 0:
                    denom = np.log(max(1e-12, 1.0 - w**3))
                    if denom < 0:
                        iters_needed = int(np.ceil(np.log(1.0 - confidence) / denom))

    if best_Rt is None or best_count < 3:
        return None
    R, t = refine_pose_gauss_newton(best_Rt[0], best_Rt[1],
                                    points[best_inliers], pixels[best_inliers], K)
    inl, err = _score_pose(R, t, points, pixels, K, reproj_px)
    if not np.any(inl):
        inl = best_inliers
        R, t = best_Rt
        _, err = _score_pose(R, t, points, pixels, K, reproj_px)
    mean_err = float(np.mean(err[inl]))
    return PnpEstimate(pose=SE3Pose.from_rt(R, t), inliers=inl, mean_reproj_px=mean_err)
