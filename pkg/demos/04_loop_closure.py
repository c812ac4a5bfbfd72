"""Room-directed loop closure: query same-label room clusters, verify
geometrically with RANSAC P3P, and measure how good the resulting edges are.

The walker does the office-corridor-kitchen circuit twice, so every
second-lap keyframe can close a loop against its first-lap twin.
"""

import numpy as np

from roomslam import PipelineConfig, multifloor_scene, run_pipeline, simulate_scene

bundle = simulate_scene(multifloor_scene(embedding_sigma=0.0, seed=0))
cfg = PipelineConfig(keyframe_gate_m=0.4, min_loop_gap=57, refine_c=4,
                     stair_window=3, max_candidates=1)
run = run_pipeline(bundle, cfg)

gt = {nid: bundle.gt.trajectory[rid] for nid, rid in run.node_to_record.items()}
print(f"accepted loop closures: {len(run.loop_results)}\n")
print(f"{'query':>5} {'match':>5} {'inliers':>7}  {'true dist (m)':>13}  {'measured rel t':>20}")
for r in run.loop_results[:12]:
    q, c = r.candidate.query_id, r.candidate.candidate_id
    d = np.linalg.norm(gt[q].translation - gt[c].translation)
    print(f"{q:>5} {c:>5} {r.inliers:>7}  {d:>13.3f}  "
          f"{np.round(r.rel_pose.translation, 3)}")
print("  ...")

m = run.metrics
print(f"\nplace recognition at N={m['place_recognition']['n']}: "
      f"{m['place_recognition']['tp']} true positives, "
      f"{m['place_recognition']['fp']} false positives")
print(f"trajectory error: odometry {m['ate']['odometry_m']:.3f} m -> "
      f"optimized {m['ate']['optimized_m']:.3f} m")
