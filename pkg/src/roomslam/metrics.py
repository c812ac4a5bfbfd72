"""Evaluation metrics: node classification accuracy against labeled room
boxes, the per-query true/false-positive protocol for place recognition, and
absolute trajectory error after rigid alignment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import SE3Pose


@dataclass(frozen=True)
class RoomBox:
    """Axis-aligned labeled box.  Bounds are half-open [min, max) so that
    boxes sharing a face partition space without overlap."""

    label: str
    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min_corner, dtype=np.float64).reshape(3)
        hi = np.asarray(self.max_corner, dtype=np.float64).reshape(3)
        if np.any(hi <= lo):
            raise ValueError(f"degenerate box for {self.label!r}")
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)

    def contains(self, p: np.ndarray) -> bool:
        return bool(np.all(p >= self.min_corner) and np.all(p < self.max_corner))


class OverlappingBoxesError(ValueError):
    pass


def label_from_boxes(position: np.ndarray, boxes: Sequence[RoomBox]) -> Optional[str]:
    """Label of the box containing `position`; None if outside all boxes;
    raises if boxes overlap at this point."""
    hits = [b for b in boxes if b.contains(position)]
    if len(hits) > 1:
        raise OverlappingBoxesError(
            f"position {position} falls in {len(hits)} boxes: "
            + ", ".join(b.label for b in hits))
    return hits[0].label if hits else None


@dataclass(frozen=True)
class AccuracyResult:
    accuracy: float
    correct: int
    included: int
    excluded: int


def classification_accuracy(labels: dict[int, str],
                            true_labels: dict[int, Optional[str]]) -> AccuracyResult:
    """Fraction of nodes whose label matches the ground truth.

    `true_labels` maps node id to the true label, or None for nodes outside
    every ground-truth box; those are excluded and reported separately.
    """
    correct = included = excluded = 0
    for nid, lab in labels.items():
        truth = true_labels.get(nid)
        if truth is None:
            excluded += 1
            continue
        included += 1
        if lab == truth:
            correct += 1
    acc = correct / included if included else 0.0
    return AccuracyResult(accuracy=acc, correct=correct,
                          included=included, excluded=excluded)


def true_labels_from_boxes(positions: dict[int, np.ndarray],
                           boxes: Sequence[RoomBox]) -> dict[int, Optional[str]]:
    return {nid: label_from_boxes(p, boxes) for nid, p in positions.items()}


def pr_counts(query_matches: dict[int, Sequence[int]], n_matches: int,
              gt_poses: dict[int, SE3Pose], dist_m: float = 1.0,
              ang_rad: float = 0.5) -> tuple[int, int]:
    """Per-query true/false positives for a retrieval run.

    A query with at least one returned match counts as a true positive when
    any of its matches lies within `dist_m` and `ang_rad` of the query's true
    pose, otherwise as a false positive.  Queries with no matches count as
    neither.  Each query may return at most `n_matches` matches.
    """
    tp = fp = 0
    for q, matches in query_matches.items():
        if len(matches) > n_matches:
            raise ValueError(f"query {q} returned {len(matches)} matches > N={n_matches}")
        if not matches:
            continue
        qpose = gt_poses[q]
        hit = False
        for m in matches:
            mpose = gt_poses[m]
            d = float(np.linalg.norm(qpose.translation - mpose.translation))
            ang = qpose.rotation_angle_to(mpose)
            if d <= dist_m and ang <= ang_rad:
                hit = True
                break
        if hit:
            tp += 1
        else:
            fp += 1
    return tp, fp


def align_rigid(source: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares rigid transform (R, t) mapping source points onto target
    points (no scale), via SVD of the cross-covariance."""
    src = np.asarray(source, dtype=np.float64)
    tgt = np.asarray(target, dtype=np.float64)
    if src.shape != tgt.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ValueError("point sets must both be (n, 3)")
    cs = src.mean(axis=0)
    ct = tgt.mean(axis=0)
    H = (src - cs).T @ (tgt - ct)
    U, _, Vt = np.linalg.svd(H)
    S = np.eye(3)
    if np.linalg.det(Vt.T @ U.T) < 0:
        S[2, 2] = -1.0
    R = Vt.T @ S @ U.T
    t = ct - R @ cs
    return R, t


def ate(estimated: Sequence[SE3Pose], ground_truth: Sequence[SE3Pose]) -> float:
    """RMSE of translational error after rigid alignment of the estimate onto
    the ground truth.  Needs at least 3 pose pairs."""
    if len(estimated) != len(ground_truth):
        raise ValueError("trajectories must have equal length")
    if len(estimated) < 3:
        raise ValueError("ATE needs at least 3 pose pairs")
    est = np.stack([p.translation for p in estimated])
    gt = np.stack([p.translation for p in ground_truth])
    R, t = align_rigid(est, gt)
    aligned = est @ R.T + t
    err = aligned - gt
    return float(np.sqrt(np.mean(np.sum(err * err, axis=1))))
