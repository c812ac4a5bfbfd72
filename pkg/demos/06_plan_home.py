"""Room-to-room planning: from the bathroom to the garden.

After mapping a home, the pose graph doubles as a roadmap: consecutive
keyframes are connected, keyframes sharing a room are connected, and
Dijkstra finds the cheapest node path between two room labels.
"""

from roomslam import (PipelineConfig, build_adjacency, home_scene, path_cost,
                      run_pipeline, simulate_scene)

bundle = simulate_scene(home_scene(seed=0))
run = run_pipeline(bundle, PipelineConfig(), plan_query=("bathroom", "garden"))

labels = {kf.id: kf.label for kf in run.snapshot.keyframes}
path = run.plan_path
print("rooms discovered:", sorted({c.label for c in run.clusters}))
print(f"\nplanned path ({len(path)} nodes):")
current = None
for nid in path:
    if labels[nid] != current:
        current = labels[nid]
        print(f"  enter {current} at node {nid}")

adj = build_adjacency(run.snapshot, run.clusters)
print(f"\ntotal path cost: {path_cost(adj, path):.1f} m")
