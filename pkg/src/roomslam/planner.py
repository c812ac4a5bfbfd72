"""Room-to-room shortest paths over the pose graph.

The traversability graph connects consecutive keyframes plus every pair of
nodes that share a room cluster; edge weights are Euclidean distances (or 1.0
with unit_weights).  Queries name room labels; endpoints are the member
nearest each cluster's mean, and with several same-label clusters the
cheapest endpoint pair wins.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .clustering import RoomCluster
from .graph import EdgeKind, GraphSnapshot


class UnknownLabelError(KeyError):
    pass


@dataclass
class AdjacencyGraph:
    """Undirected weighted adjacency over node ids."""

    nodes: list[int]
    adj: dict[int, dict[int, float]] = field(default_factory=dict)

    def add_edge(self, u: int, v: int, weight: float):
        if u == v:
            return
        self.adj.setdefault(u, {})[v] = weight
        self.adj.setdefault(v, {})[u] = weight

    def edge_count(self) -> int:
        return sum(len(nbrs) for nbrs in self.adj.values()) // 2


def build_adjacency(snapshot: GraphSnapshot, clusters: list[RoomCluster],
                    unit_weights: bool = False) -> AdjacencyGraph:
    """Chain edges plus a clique inside every cluster, deduplicated."""
    pos = {kf.id: kf.pose.translation for kf in snapshot.keyframes}

    def weight(u, v):
        return 1.0 if unit_weights else float(np.linalg.norm(pos[u] - pos[v]))

    g = AdjacencyGraph(nodes=sorted(pos))
    for e in snapshot.edges:
        if e.kind is EdgeKind.ODOMETRY:
            g.add_edge(e.from_id, e.to_id, weight(e.from_id, e.to_id))
    for c in clusters:
        members = sorted(c.members)
        for i, u in enumerate(members):
            for v in members[i + 1:]:
                g.add_edge(u, v, weight(u, v))
    return g


def dijkstra(g: AdjacencyGraph, source: int) -> tuple[dict[int, float], dict[int, int]]:
    """Distances and predecessors from `source`; deterministic (heap keyed by
    (distance, node id))."""
    dist = {source: 0.0}
    prev: dict[int, int] = {}
    heap = [(0.0, source)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, wt in sorted(g.adj.get(u, {}).items()):
            nd = d + wt
            if v not in dist or nd < dist[v]:
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    return dist, prev


def _endpoint(cluster: RoomCluster, snapshot: GraphSnapshot) -> int:
    """Member nearest the cluster mean, lowest id on ties."""
    best, best_d = None, None
    for nid in sorted(cluster.members):
        d = float(np.linalg.norm(snapshot.node(nid).pose.translation - cluster.mean_pos))
        if best_d is None or d < best_d:
            best, best_d = nid, d
    return best


def plan(g: AdjacencyGraph, start_label: str, goal_label: str,
         clusters: list[RoomCluster], snapshot: GraphSnapshot) -> list[int] | None:
    """Cheapest node path between two room labels, or None when unreachable."""
    starts = [c for c in clusters if c.label == start_label]
    goals = [c for c in clusters if c.label == goal_label]
    if not starts:
        raise UnknownLabelError(f"no cluster labeled {start_label!r}")
    if not goals:
        raise UnknownLabelError(f"no cluster labeled {goal_label!r}")

    start_nodes = sorted(_endpoint(c, snapshot) for c in starts)
    goal_nodes = sorted(_endpoint(c, snapshot) for c in goals)

    best_cost, best_pair, best_prev = None, None, None
    for s in start_nodes:
        dist, prev = dijkstra(g, s)
        for t in goal_nodes:
            if t not in dist:
                continue
            cost = dist[t]
            pair = (s, t)
            if best_cost is None or cost < best_cost or \
                    (cost == best_cost and pair < best_pair):
                best_cost, best_pair, best_prev = cost, pair, prev
    if best_pair is None:
        return None
    s, t = best_pair
    path = [t]
    while path[-1] != s:
        path.append(best_prev[path[-1]])
    path.reverse()
    return path


def path_cost(g: AdjacencyGraph, path: list[int]) -> float:
    return sum(g.adj[u][v] for u, v in zip(path[:-1], path[1:]))
