"""Build a pose graph by hand: distance gating, odometry edges, snapshots.

The graph only admits keyframes that moved far enough, and every admission
records the relative transform from the previous keyframe.  Snapshots are
immutable copies: mutate the live graph all you want, old snapshots stay put.
"""

import numpy as np

from roomslam import PoseGraph, SE3Pose, neighbors


def pose(x, y=0.0):
    return SE3Pose(np.array([x, y, 0.0]), np.array([0.0, 0.0, 0.0, 1.0]))


graph = PoseGraph(gate_m=0.5)

print("walking east in 0.3 m steps; the gate only passes every other step")
x = 0.0
for step in range(10):
    node_id = graph.add_keyframe(pose(x), stamp=float(step), embedding_row=0)
    verdict = f"accepted as node {node_id}" if node_id is not None else "rejected"
    print(f"  step {step}: x={x:.1f}  ->  {verdict}")
    x += 0.3

print(f"\n{len(graph)} nodes, {len(graph.edges)} odometry edges")
for e in graph.edges:
    print(f"  edge {e.from_id}->{e.to_id}: rel translation "
          f"{np.round(e.rel_pose.translation, 2)}")

snap = graph.snapshot()
print(f"\nsnapshot v{snap.version} holds {len(snap.keyframes)} keyframes")
print("3 nearest neighbors of node 0:", neighbors(snap, 0, 3))

graph.add_keyframe(pose(10.0), stamp=99.0, embedding_row=0)
print("after adding another node, the old snapshot still has",
      len(snap.keyframes), "keyframes")
