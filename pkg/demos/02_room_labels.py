"""Classify keyframes against a text prompt bank, then clean up the labels
with one neighbor-vote refinement pass.

The scene is a four-room apartment with noisy embeddings, so the initial
per-frame classification gets roughly one node in five wrong; the vote fixes
most of them.
"""

from roomslam import (PipelineConfig, PoseGraph, PromptBank,
                      classification_accuracy, classify, four_room_scene,
                      refine_pass, simulate_scene)

bundle = simulate_scene(four_room_scene(embedding_sigma=0.55, seed=0))
prompts = PromptBank(list(bundle.prompts), bundle.text_bank)
print("prompt bank:", ", ".join(p.text for p in bundle.prompts))

graph = PoseGraph(gate_m=0.5, n_embedding_rows=len(bundle.image_bank))
truth = {}
for rec in bundle.records:
    nid = graph.add_keyframe(rec.pose, rec.stamp, rec.embedding_row)
    if nid is None:
        continue
    label, score = classify(rec.embedding_row, bundle.image_bank, prompts)
    graph.set_label(nid, label, score)
    truth[nid] = rec.gt_label

snap = graph.snapshot()
initial = {kf.id: kf.label for kf in snap.keyframes}
refined = refine_pass(snap, count=PipelineConfig().refine_c)

acc0 = classification_accuracy(initial, truth)
acc1 = classification_accuracy(refined, truth)
print(f"\nnodes: {acc0.included}")
print(f"initial accuracy: {acc0.accuracy:.3f}")
print(f"after one refinement pass: {acc1.accuracy:.3f}")

fixed = sum(1 for i in truth
            if initial[i] != truth[i] and refined[i] == truth[i])
broken = sum(1 for i in truth
             if initial[i] == truth[i] and refined[i] != truth[i])
print(f"votes fixed {fixed} wrong labels and broke {broken}")
