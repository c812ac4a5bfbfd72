"""Group labeled keyframes into room instances and split the building into
floors using the stairs.

Runs the full pipeline on the noiseless two-floor scene and prints the
resulting clusters: two offices merged into one, two corridors, a kitchen,
the stairwell, and a bedroom upstairs.
"""

import numpy as np

from roomslam import PipelineConfig, multifloor_scene, run_pipeline, simulate_scene

bundle = simulate_scene(multifloor_scene(embedding_sigma=0.0, seed=0))
cfg = PipelineConfig(keyframe_gate_m=0.4, min_loop_gap=57, refine_c=4,
                     stair_window=3, max_candidates=1)
run = run_pipeline(bundle, cfg)

print(f"{len(run.snapshot.keyframes)} keyframes -> {len(run.clusters)} room instances\n")
print(f"{'cluster':>7}  {'label':<10} {'floor':>5} {'nodes':>5}  mean position")
for c in sorted(run.clusters, key=lambda c: (c.floor, c.label)):
    print(f"{c.cluster_id:>7}  {c.label:<10} {run.floors[c.cluster_id]:>5} "
          f"{len(c.members):>5}  {np.round(c.mean_pos, 1)}")

zs = {}
for c in run.clusters:
    zs.setdefault(run.floors[c.cluster_id], []).append(c.mean_pos[2])
print("\nfloor heights:",
      {f: round(float(np.mean(v)), 2) for f, v in sorted(zs.items())})
