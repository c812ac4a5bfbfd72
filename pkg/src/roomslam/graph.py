"""Incremental pose graph with distance-gated keyframe admission.

A single writer owns the live ``PoseGraph``; everything downstream (label
refinement, clustering, loop search, optimization) runs on immutable
``GraphSnapshot`` values taken from it.  Snapshots copy all mutable state, so
concurrent readers never observe writer mutations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .geometry import SE3Pose


class EdgeKind(Enum):
    ODOMETRY = "odometry"
    LOOP = "loop"


@dataclass(frozen=True)
class LocalFeature:
    """One local feature: pixel position, 3D point in the camera frame
    (meters, z forward), and a binary descriptor."""

    pixel: np.ndarray      # (2,) u, v
    point_cam: np.ndarray  # (3,) X, Y, Z with Z > 0
    descriptor: bytes

    def __post_init__(self):
        px = np.asarray(self.pixel, dtype=np.float64).reshape(2).copy()
        pt = np.asarray(self.point_cam, dtype=np.float64).reshape(3).copy()
        if pt[2] <= 0:
            raise ValueError(f"feature depth must be positive, got {pt[2]}")
        px.setflags(write=False)
        pt.setflags(write=False)
        object.__setattr__(self, "pixel", px)
        object.__setattr__(self, "point_cam", pt)


@dataclass
class Keyframe:
    """Pose-graph node: pose estimate plus the embedding row and optional
    local features it was admitted with.  `label` is filled in by the
    classification stage and may be rewritten by refinement."""

    id: int
    stamp: float
    pose: SE3Pose
    embedding_row: int
    features: Optional[tuple[LocalFeature, ...]] = None
    label: Optional[str] = None
    label_score: float = 0.0


@dataclass(frozen=True)
class GraphEdge:
    from_id: int
    to_id: int
    kind: EdgeKind
    rel_pose: SE3Pose  # measurement of T_from^-1 * T_to
    info_weight: float = 1.0

    def __post_init__(self):
        if self.info_weight <= 0:
            raise ValueError("info_weight must be positive")
        if self.kind is EdgeKind.ODOMETRY and not self.from_id < self.to_id:
            raise ValueError("odometry edges must go from lower to higher id")


@dataclass(frozen=True)
class GraphSnapshot:
    """Immutable view of the graph at a point in time."""

    keyframes: tuple[Keyframe, ...]
    edges: tuple[GraphEdge, ...]
    version: int

    def __post_init__(self):
        ids = {kf.id for kf in self.keyframes}
        for e in self.edges:
            if e.from_id not in ids or e.to_id not in ids:
                raise ValueError(f"edge {e.from_id}->{e.to_id} references missing node")

    def node(self, node_id: int) -> Keyframe:
        kf = self._index().get(node_id)
        if kf is None:
            raise KeyError(f"unknown node id {node_id}")
        return kf

    def _index(self) -> dict[int, Keyframe]:
        idx = getattr(self, "_id_index", None)
        if idx is None:
            idx = {kf.id: kf for kf in self.keyframes}
            object.__setattr__(self, "_id_index", idx)
        return idx

    def positions(self) -> np.ndarray:
        """(n, 3) stacked translations in keyframe order."""
        if not self.keyframes:
            return np.zeros((0, 3))
        return np.stack([kf.pose.translation for kf in self.keyframes])

    def ids(self) -> np.ndarray:
        return np.array([kf.id for kf in self.keyframes], dtype=np.int64)

    def labels(self) -> dict[int, Optional[str]]:
        return {kf.id: kf.label for kf in self.keyframes}


def _nearest_ids(positions: np.ndarray, ids: np.ndarray, query_pos: np.ndarray,
                 exclude_id: int, count: int) -> list[int]:
    """Ids of the `count` nodes nearest to query_pos, distance ascending with
    id-ascending tie-break, excluding `exclude_id`."""
    d = np.linalg.norm(positions - query_pos, axis=1)
    order = np.lexsort((ids, d))
    out = []
    for k in order:
        if ids[k] == exclude_id:
            continue
        out.append(int(ids[k]))
        if len(out) == count:
            break
    return out


def neighbors(snapshot: GraphSnapshot, node_id: int, count: int,
              metric: str = "euclidean") -> list[int]:
    """The `count` nearest nodes to `node_id`, excluding itself.

    `metric` is "euclidean" (3D distance between current pose estimates,
    the default) or "temporal" (timestamp distance).  Deterministic:
    distance ascending, id ascending on ties.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    kf = snapshot.node(node_id)
    ids = snapshot.ids()
    if metric == "euclidean":
        return _nearest_ids(snapshot.positions(), ids, kf.pose.translation, node_id, count)
    if metric == "temporal":
        stamps = np.array([k.stamp for k in snapshot.keyframes])
        d = np.abs(stamps - kf.stamp)
        order = np.lexsort((ids, d))
        return [int(ids[k]) for k in order if ids[k] != node_id][:count]
    raise ValueError(f"unknown neighbor metric {metric!r}")


def all_neighbors(snapshot: GraphSnapshot, count: int,
                  metric: str = "euclidean") -> dict[int, list[int]]:
    """neighbors() for every node in one pass (same ordering semantics)."""
    ids = snapshot.ids()
    n = len(ids)
    out: dict[int, list[int]] = {}
    if n == 0:
        return out
    if metric == "temporal":
        coords = np.array([[k.stamp] for k in snapshot.keyframes])
    else:
        coords = snapshot.positions()
    # full pairwise distances; desk-scale graphs keep this cheap
    diff = coords[:, None, :] - coords[None, :, :]
    dists = np.linalg.norm(diff, axis=2)
    for i in range(n):
        order = np.lexsort((ids, dists[i]))
        picked = [int(ids[k]) for k in order if ids[k] != ids[i]][:count]
        out[int(ids[i])] = picked
    return out


class NonMonotonicStampError(ValueError):
    pass


class PoseGraph:
    """Single-writer incremental pose graph.

    Keyframes are admitted when they are at least `gate_m` from the last
    accepted keyframe; each admission creates one odometry edge carrying the
    relative measurement T_prev^-1 * T_new.
    """

    def __init__(self, gate_m: float = 0.5, odom_info_weight: float = 1.0,
                 n_embedding_rows: Optional[int] = None):
        if gate_m < 0:
            raise ValueError("gate_m must be non-negative")
        self.gate_m = gate_m
        self.odom_info_weight = odom_info_weight
        self.n_embedding_rows = n_embedding_rows
        self._keyframes: list[Keyframe] = []
        self._edges: list[GraphEdge] = []
        self._version = 0
        self._last_stamp: Optional[float] = None

    def __len__(self) -> int:
        return len(self._keyframes)

    @property
    def keyframes(self) -> Sequence[Keyframe]:
        return self._keyframes

    @property
    def edges(self) -> Sequence[GraphEdge]:
        return self._edges

    def node(self, node_id: int) -> Keyframe:
        if 0 <= node_id < len(self._keyframes):
            return self._keyframes[node_id]
        raise KeyError(f"unknown node id {node_id}")

    def add_keyframe(self, pose: SE3Pose, stamp: float, embedding_row: int,
                     features: Optional[Sequence[LocalFeature]] = None) -> Optional[int]:
        """Admit a keyframe if it clears the distance gate.

        Returns the new node id, or None when rejected by the gate.  Raises
        on a non-increasing stamp or an out-of-range embedding row.
        """
        if self._last_stamp is not None and stamp <= self._last_stamp:
            raise NonMonotonicStampError(
                f"stamp {stamp} not after previous {self._last_stamp}")
        if self.n_embedding_rows is not None and not 0 <= embedding_row < self.n_embedding_rows:
            raise IndexError(f"embedding_row {embedding_row} out of range")
        if self._keyframes:
            last = self._keyframes[-1]
            dist = float(np.linalg.norm(pose.translation - last.pose.translation))
            if dist < self.gate_m:
                return None
        node_id = len(self._keyframes)
        kf = Keyframe(
            id=node_id, stamp=stamp, pose=pose, embedding_row=embedding_row,
            features=tuple(features) if features is not None else None)
        self._keyframes.append(kf)
        self._last_stamp = stamp
        if node_id > 0:
            prev = self._keyframes[node_id - 1]
            rel = prev.pose.inverse().compose(pose)
            self._edges.append(GraphEdge(
                from_id=prev.id, to_id=node_id, kind=EdgeKind.ODOMETRY,
                rel_pose=rel, info_weight=self.odom_info_weight))
        return node_id

    def add_loop_edge(self, from_id: int, to_id: int, rel_pose: SE3Pose,
                      info_weight: float = 1.0) -> GraphEdge:
        self.node(from_id)
        self.node(to_id)
        edge = GraphEdge(from_id=from_id, to_id=to_id, kind=EdgeKind.LOOP,
                         rel_pose=rel_pose, info_weight=info_weight)
        self._edges.append(edge)
        return edge

    def set_label(self, node_id: int, label: str, score: Optional[float] = None):
        kf = self.node(node_id)
        kf.label = label
        if score is not None:
            kf.label_score = score

    def snapshot(self) -> GraphSnapshot:
        """Immutable copy of the current graph with a fresh version number."""
        self._version += 1
        frozen = tuple(replace(kf) for kf in self._keyframes)
        return GraphSnapshot(keyframes=frozen, edges=tuple(self._edges),
                             version=self._version)

    def apply_optimized_poses(self, poses: dict[int, SE3Pose], base_version: int):
        """Merge optimizer output back into the live graph.

        Nodes covered by `poses` are replaced outright.  Nodes admitted after
        the snapshot the optimizer ran on are corrected by the rigid transform
        that maps the newest optimized node's old pose onto its new one.
        """
        if base_version > self._version:
            raise ValueError(f"base_version {base_version} is newer than graph ({self._version})")
        for nid in poses:
            self.node(nid)
        if not poses:
            return
        newest = max(poses)
        correction = poses[newest].compose(self._keyframes[newest].pose.inverse())
        for kf in self._keyframes:
            if kf.id in poses:
                kf.pose = poses[kf.id]
            elif kf.id > newest:
                kf.pose = correction.compose(kf.pose)
