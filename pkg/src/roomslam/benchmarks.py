"""Hand-constructible benchmark graphs with known ground truth.

The square benchmark walks a square loop several times with noisy odometry,
then adds loop edges between co-located keyframes of consecutive laps.  A
configurable fraction of the loop edges is replaced by garbage measurements
to exercise the robust loss.
"""

from __future__ import annotations

import numpy as np

from .geometry import SE3Pose, so3_exp
from .graph import EdgeKind, GraphEdge, GraphSnapshot, Keyframe


def _yaw_pose(position, yaw) -> SE3Pose:
    R = so3_exp(np.array([0.0, 0.0, yaw]))
    return SE3Pose.from_rt(R, np.asarray(position, dtype=np.float64))


def square_truth(side_m: float = 10.0, step_m: float = 1.0, laps: int = 2) -> list[SE3Pose]:
    """Ground-truth poses around an axis-aligned square, camera yawed along
    the direction of travel."""
    per_side = int(round(side_m / step_m))
    corners = [np.array([0.0, 0.0, 0.0]), np.array([side_m, 0.0, 0.0]),
               np.array([side_m, side_m, 0.0]), np.array([0.0, side_m, 0.0])]
    poses = []
    for _ in range(laps):
        for c in range(4):
            a = corners[c]
            b = corners[(c + 1) % 4]
            d = (b - a) / per_side
            yaw = float(np.arctan2(d[1], d[0]))
            for k in range(per_side):
                poses.append(_yaw_pose(a + k * d, yaw))
    return poses


def square_benchmark(side_m: float = 10.0, step_m: float = 1.0, laps: int = 2,
                     trans_noise: float = 0.03, yaw_noise: float = 0.01,
                     loop_stride: int = 4, outlier_fraction: float = 0.0,
                     with_loops: bool = True, seed: int = 0,
                     ) -> tuple[GraphSnapshot, list[SE3Pose]]:
    """(snapshot, ground truth) for the square-loop benchmark.

    Odometry is integrated from per-step noisy relative measurements, so the
    stored odometry edges are exactly consistent with the initial poses and
    all error concentrates against the loop edges.  Edge information weights
    are set to 1/noise^2 so the robust loss sees correctly scaled residuals.
    Loop measurements are the true relative poses between lap mates (taken
    every `loop_stride` steps); `outlier_fraction` of them are replaced by
    guaranteed-wrong measurements.
    """
    rng = np.random.default_rng(seed)
    truth = square_truth(side_m, step_m, laps)
    n = len(truth)
    per_lap = n // laps
    info = 1.0 / trans_noise**2

    poses = [truth[0]]
    edges = []
    for k in range(1, n):
        rel_true = truth[k - 1].inverse().compose(truth[k])
        dt = rng.normal(0.0, trans_noise, size=3)
        dt[2] *= 0.1  # mostly planar error
        dyaw = rng.normal(0.0, yaw_noise)
        noise = SE3Pose.from_rt(so3_exp(np.array([0.0, 0.0, dyaw])), dt)
        rel = rel_true.compose(noise)
        poses.append(poses[-1].compose(rel))
        edges.append(GraphEdge(from_id=k - 1, to_id=k, kind=EdgeKind.ODOMETRY,
                               rel_pose=rel, info_weight=info))

    if with_loops and laps > 1:
        loop_ids = []
        for k in range(per_lap, n, loop_stride):
            loop_ids.append(k)
        n_out = int(round(outlier_fraction * len(loop_ids)))
        outlier_set = set(rng.choice(len(loop_ids), size=n_out, replace=False).tolist()) \
            if n_out else set()
        for idx, k in enumerate(loop_ids):
            mate = k - per_lap
            rel = truth[k].inverse().compose(truth[mate])
            if idx in outlier_set:
                # guaranteed-wrong: several meters off and strongly rotated
                direction = rng.normal(size=3)
                direction /= np.linalg.norm(direction)
                t = rel.translation + rng.uniform(3.0, 0.8 * side_m) * direction
                w = rng.uniform(0.5, 1.5) * rng.choice([-1.0, 1.0]) * np.array([0, 0, 1.0])
                rel = SE3Pose.from_rt(so3_exp(w) @ rel.rotation_matrix(), t)
            edges.append(GraphEdge(from_id=k, to_id=mate, kind=EdgeKind.LOOP,
                                   rel_pose=rel, info_weight=info))

    kfs = tuple(Keyframe(id=k, stamp=float(k), pose=poses[k], embedding_row=0)
                for k in range(n))
    return GraphSnapshot(keyframes=kfs, edges=tuple(edges), version=1), truth
