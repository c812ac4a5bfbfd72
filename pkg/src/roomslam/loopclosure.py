"""Room-directed loop closure.

Candidates come only from room clusters that share the query's label: the
nearest such cluster (by mean position against the query's current estimate)
is searched, its keyframes ranked by embedding cosine against the query.
Survivors of geometric PnP verification become loop edges.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .clustering import RoomCluster
from .geometry import SE3Pose
from .graph import GraphSnapshot, Keyframe, PoseGraph
from .pnp import CameraIntrinsics, descriptors_array, match_mutual, ransac_p3p
from .semantics import EmbeddingBank, cosine_similarity


class MissingFeaturesError(ValueError):
    """A node offered for verification carries no local features."""


@dataclass(frozen=True)
class LoopCandidate:
    query_id: int
    candidate_id: int
    cosine: float
    cluster_id: int

    def __post_init__(self):
        if self.query_id == self.candidate_id:
            raise ValueError("candidate must differ from query")


@dataclass(frozen=True)
class LoopResult:
    candidate: LoopCandidate
    rel_pose: SE3Pose  # T_query -> candidate (measurement T_q^-1 T_c)
    inliers: int


def propose(query_id: int, snapshot: GraphSnapshot, clusters: Sequence[RoomCluster],
            image_bank: EmbeddingBank, max_candidates: int = 5,
            min_loop_gap: int = 30) -> list[LoopCandidate]:
    """Loop candidates for one query node.

    Only clusters with the query's label are considered; nodes within
    `min_loop_gap` keyframes of the query are ignored so the query cannot
    match its own recent trajectory.  The nearest eligible cluster is ranked
    by cosine similarity (ties: spatially nearer first, then lower id) and
    truncated to `max_candidates` (0 means no truncation).
    """
    query = snapshot.node(query_id)
    if query.label is None:
        raise ValueError(f"query node {query_id} is unlabeled")
    qpos = query.pose.translation
    qvec = image_bank.row(query.embedding_row)

    def eligible(c: RoomCluster) -> list[int]:
        return [m for m in sorted(c.members)
                if m != query_id and abs(query_id - m) >= min_loop_gap]

    best_cluster = None
    best_members: list[int] = []
    best_dist = None
    for c in sorted(clusters, key=lambda c: c.cluster_id):
        if c.label != query.label:
            continue
        members = eligible(c)
        if not members:
            continue
        d = float(np.linalg.norm(c.mean_pos - qpos))
        if best_dist is None or d < best_dist:
            best_cluster, best_members, best_dist = c, members, d
    if best_cluster is None:
        return []

    ranked = []
    for m in best_members:
        node = snapshot.node(m)
        cos = cosine_similarity(qvec, image_bank.row(node.embedding_row))
        dist = float(np.linalg.norm(node.pose.translation - qpos))
        ranked.append((-cos, dist, m))
    ranked.sort()
    if max_candidates > 0:
        ranked = ranked[:max_candidates]
    return [LoopCandidate(query_id=query_id, candidate_id=m, cosine=-negcos,
                          cluster_id=best_cluster.cluster_id)
            for negcos, _, m in ranked]


def verify_pnp(query: Keyframe, candidate: Keyframe, intrinsics: CameraIntrinsics,
               min_inliers: int = 12, reproj_px: float = 2.0,
               ransac_iters: int = 300, seed: int = 0) -> Optional[tuple[SE3Pose, int]]:
    """Geometric verification of one candidate.

    Matches descriptors mutually, solves RANSAC P3P on the candidate's 3D
    points against the query's pixels, and polishes with Gauss-Newton.
    Returns (T_query->candidate, inlier count), or None when verification
    fails.  Raises MissingFeaturesError when either node has no features,
    which is a data problem rather than a failed verification.
    """
    if not query.features or not candidate.features:
        raise MissingFeaturesError(
            f"nodes {query.id}/{candidate.id} lack local features")
    matches = match_mutual(descriptors_array(query.features),
                           descriptors_array(candidate.features))
    if len(matches) < max(3, min_inliers):
        return None
    points = np.stack([candidate.features[j].point_cam for _, j in matches])
    pixels = np.stack([query.features[i].pixel for i, _ in matches])
    est = ransac_p3p(points, pixels, intrinsics, reproj_px=reproj_px,
                     max_iters=ransac_iters, seed=seed)
    if est is None:
        return None
    n_inl = int(np.sum(est.inliers))
    if n_inl < min_inliers or est.mean_reproj_px > reproj_px:
        return None
    return est.pose, n_inl


def close_loops(query_id: int, snapshot: GraphSnapshot, clusters: Sequence[RoomCluster],
                graph: PoseGraph, image_bank: EmbeddingBank,
                intrinsics: CameraIntrinsics, max_candidates: int = 5,
                min_loop_gap: int = 30, min_inliers: int = 12,
                reproj_px: float = 2.0, ransac_iters: int = 300,
                loop_info_weight: float = 1.0, seed: int = 0) -> list[LoopResult]:
    """Propose, verify, and commit loop edges for one query node.

    Each verified candidate becomes a Loop edge query -> candidate in the
    live graph.  Verification seeds derive from (seed, query, candidate), so
    results do not depend on iteration order.
    """
    results = []
    query = snapshot.node(query_id)
    for cand in propose(query_id, snapshot, clusters, image_bank,
                        max_candidates=max_candidates, min_loop_gap=min_loop_gap):
        node = snapshot.node(cand.candidate_id)
        if not query.features or not node.features:
            continue  # feature-less nodes simply cannot close loops
        pair_seed = (seed * 1_000_003 + query_id * 1009 + cand.candidate_id) % (2**31)
        verdict = verify_pnp(query, node, intrinsics, min_inliers=min_inliers,
                             reproj_px=reproj_px, ransac_iters=ransac_iters,
                             seed=pair_seed)
        if verdict is None:
            continue
        rel_pose, n_inl = verdict
        graph.add_loop_edge(query_id, cand.candidate_id, rel_pose,
                            info_weight=loop_info_weight)
        results.append(LoopResult(candidate=cand, rel_pose=rel_pose, inliers=n_inl))
    return results
