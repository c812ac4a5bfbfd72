"""Room-instance clustering and floor segmentation.

Clusters are a derived view: they are recomputed from a labeled snapshot
whenever labels change, rather than patched incrementally.  A node joins the
nearest same-label cluster whose running mean is within a radius; same-label
clusters merge unless a connector-class node (corridor, stairs) lies on the
odometry path between them; stair clusters split the odometry chain into
floors ordered by height.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import GraphSnapshot
from .semantics import STAIRS_LABEL

DEFAULT_CONNECTOR_LABELS = ("corridor", STAIRS_LABEL)


@dataclass
class RoomCluster:
    """One room instance: a label-homogeneous set of node ids with a running
    mean position."""

    cluster_id: int
    label: str
    members: set[int] = field(default_factory=set)
    mean_pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    floor: int = 0

    def add(self, node_id: int, position: np.ndarray):
        n = len(self.members)
        self.members.add(node_id)
        self.mean_pos = (self.mean_pos * n + position) / (n + 1)


def assign_clusters(snapshot: GraphSnapshot, radius_m: float = 3.0) -> list[RoomCluster]:
    """Greedy single-pass clustering over nodes in id order.

    A node joins the existing cluster with its label whose mean is nearest
    and within `radius_m`; otherwise it opens a new cluster.
    """
    clusters: list[RoomCluster] = []
    for kf in sorted(snapshot.keyframes, key=lambda k: k.id):
        if kf.label is None:
            raise ValueError(f"node {kf.id} is unlabeled; classify before clustering")
        pos = kf.pose.translation
        best = None
        best_dist = radius_m
        for c in clusters:
            if c.label != kf.label:
                continue
            d = float(np.linalg.norm(c.mean_pos - pos))
            if d < best_dist or (d == best_dist and best is None):
                best = c
                best_dist = d
        if best is None:
            best = RoomCluster(cluster_id=len(clusters), label=kf.label)
            clusters.append(best)
        best.add(kf.id, pos)
    return clusters


def _path_has_connector(snapshot: GraphSnapshot, id_a: int, id_b: int,
                        connector_labels: tuple[str, ...]) -> bool:
    """True if a connector-class node sits strictly between id_a and id_b on
    the odometry chain."""
    lo, hi = min(id_a, id_b), max(id_a, id_b)
    labels = snapshot.labels()
    return any(labels.get(nid) in connector_labels for nid in range(lo + 1, hi))


def _closest_member_pair(snapshot: GraphSnapshot, a: RoomCluster,
                         b: RoomCluster) -> tuple[int, int]:
    pos = {kf.id: kf.pose.translation for kf in snapshot.keyframes}
    ids_a = sorted(a.members)
    ids_b = sorted(b.members)
    pa = np.stack([pos[i] for i in ids_a])
    pb = np.stack([pos[i] for i in ids_b])
    d = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=2)
    i, j = np.unravel_index(int(np.argmin(d)), d.shape)
    return ids_a[i], ids_b[j]


def merge_clusters(clusters: list[RoomCluster], snapshot: GraphSnapshot,
                   radius_m: float = 3.0,
                   connector_labels: tuple[str, ...] = DEFAULT_CONNECTOR_LABELS,
                   ) -> list[RoomCluster]:
    """Merge same-label clusters that touch, to a fixed point.

    Two clusters touch when an odometry edge joins their member sets or their
    means are within 2 * radius_m; the merge is vetoed when the odometry path
    between their closest members crosses a connector-class node.
    """
    pos = {kf.id: kf.pose.translation for kf in snapshot.keyframes}
    odo_pairs = {(e.from_id, e.to_id) for e in snapshot.edges
                 if e.kind.value == "odometry"}

    clusters = [RoomCluster(c.cluster_id, c.label, set(c.members),
                            c.mean_pos.copy(), c.floor) for c in clusters]
    changed = True
    while changed:
        changed = False
        n = len(clusters)
        for i in range(n):
            for j in range(i + 1, n):
                a, b = clusters[i], clusters[j]
                if a.label != b.label:
                    continue
                adjacent = any(
                    (u, v) in odo_pairs or (v, u) in odo_pairs
                    for u in a.members for v in b.members)
                near = float(np.linalg.norm(a.mean_pos - b.mean_pos)) <= 2.0 * radius_m
                if not (adjacent or near):
                    continue
                ca, cb = _closest_member_pair(snapshot, a, b)
                if a.label not in connector_labels and \
                        _path_has_connector(snapshot, ca, cb, connector_labels):
                    continue
                members = a.members | b.members
                pts = np.stack([pos[m] for m in sorted(members)])
                merged = RoomCluster(cluster_id=a.cluster_id, label=a.label,
                                     members=members, mean_pos=pts.mean(axis=0))
                clusters = [c for k, c in enumerate(clusters) if k not in (i, j)]
                clusters.append(merged)
                changed = True
                break
            if changed:
                break
    clusters.sort(key=lambda c: min(c.members))
    for k, c in enumerate(clusters):
        c.cluster_id = k
    return clusters


def segment_floors(clusters: list[RoomCluster], snapshot: GraphSnapshot,
                   unify_z_m: float = 1.0) -> dict[int, int]:
    """Assign a floor index to every cluster.

    Stair clusters cut the odometry chain into segments; segments whose mean
    heights agree within `unify_z_m` share a floor; floors are numbered by
    ascending height.  Stair clusters take the floor of the lower adjacent
    segment.  Mutates cluster.floor and returns {cluster_id: floor}.
    """
    kfs = sorted(snapshot.keyframes, key=lambda k: k.id)
    stair_ids = set()
    for c in clusters:
        if c.label == STAIRS_LABEL:
            stair_ids |= c.members

    # contiguous runs of non-stair nodes form segments
    segments: list[list[int]] = []
    current: list[int] = []
    for kf in kfs:
        if kf.id in stair_ids:
            if current:
                segments.append(current)
                current = []
        else:
            current.append(kf.id)
    if current:
        segments.append(current)

    z_of = {kf.id: kf.pose.translation[2] for kf in kfs}
    if not segments:  # all-stairs graph: one floor
        for c in clusters:
            c.floor = 0
        return {c.cluster_id: 0 for c in clusters}
    seg_z = [float(np.mean([z_of[i] for i in seg])) for seg in segments]

    # unify segments at equal height, then order floors by height
    order = sorted(range(len(segments)), key=lambda s: seg_z[s])
    floor_of_segment: dict[int, int] = {}
    next_floor = -1
    prev_z = None
    for s in order:
        if prev_z is None or seg_z[s] - prev_z > unify_z_m:
            next_floor += 1
            prev_z = seg_z[s]
        floor_of_segment[s] = next_floor

    segment_of_node = {nid: s for s, seg in enumerate(segments) for nid in seg}
    result: dict[int, int] = {}
    for c in clusters:
        if c.label == STAIRS_LABEL:
            result[c.cluster_id] = _stair_floor(c, segments, seg_z, floor_of_segment, kfs)
        else:
            segs = [segment_of_node[m] for m in c.members if m in segment_of_node]
            if not segs:
                result[c.cluster_id] = 0
                continue
            # majority segment (clusters should not span stairs, but be safe)
            seg = max(set(segs), key=lambda s: (segs.count(s), -s))
            result[c.cluster_id] = floor_of_segment[seg]
        c.floor = result[c.cluster_id]
    return result


def _stair_floor(cluster: RoomCluster, segments: list[list[int]], seg_z: list[float],
                 floor_of_segment: dict[int, int], kfs) -> int:
    """Floor of the lower adjacent segment of a stair run."""
    lo, hi = min(cluster.members), max(cluster.members)
    before = after = None
    for s, seg in enumerate(segments):
        if seg[-1] < lo:
            before = s
        if after is None and seg[0] > hi:
            after = s
    adjacent = [s for s in (before, after) if s is not None]
    if not adjacent:
        return 0
    lower = min(adjacent, key=lambda s: seg_z[s])
    return floor_of_segment[lower]
