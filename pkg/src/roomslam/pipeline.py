"""End-to-end pipeline: replay a dataset bundle through keyframe gating,
classification, periodic refinement + reclustering, room-directed loop
closure, and pose graph optimization; then compute metrics and export
renderable outputs.

The replay composes raw odometry increments onto the current pose estimate,
so odometry edge measurements stay pure odometry even after optimization has
rewritten earlier poses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .bundle import DatasetBundle, pose_to_list
from .clustering import RoomCluster, assign_clusters, merge_clusters, segment_floors
from .config import PipelineConfig
from .geometry import SE3Pose
from .graph import EdgeKind, GraphSnapshot, PoseGraph
from .loopclosure import LoopResult, close_loops
from .metrics import ate, classification_accuracy, pr_counts, true_labels_from_boxes
from .optimizer import DcsParams, OptimizeOptions, optimize
from .planner import build_adjacency, plan
from .semantics import (PromptBank, STAIRS_LABEL, classify, detect_stairs,
                        normalize_label, refine_pass)

SCHEMA_VERSION = 1


@dataclass
class RunOutput:
    snapshot: GraphSnapshot
    clusters: list[RoomCluster]
    floors: dict[int, int]
    loop_results: list[LoopResult]
    node_to_record: dict[int, int]
    initial_labels: dict[int, str]
    initial_scores: dict[int, float]
    odometry_poses: dict[int, SE3Pose]
    metrics: Optional[dict] = None
    plan_path: Optional[list[int]] = None
    plan_query: Optional[tuple[str, str]] = None
    config: PipelineConfig = field(default_factory=PipelineConfig)


def _refinement_round(graph: PoseGraph, cfg: PipelineConfig) -> tuple[list[RoomCluster], dict[int, int]]:
    snap = graph.snapshot()
    new_labels = refine_pass(snap, cfg.refine_c, metric=cfg.neighbor_metric)
    for nid, label in new_labels.items():
        if snap.node(nid).label != label:
            graph.set_label(nid, label)
    if len(graph) >= cfg.stair_window:
        for nid in detect_stairs(snap, cfg.stair_window, cfg.stair_dz_m):
            graph.set_label(nid, STAIRS_LABEL)
    snap = graph.snapshot()
    clusters = assign_clusters(snap, radius_m=cfg.cluster_radius_m)
    clusters = merge_clusters(clusters, snap, radius_m=cfg.cluster_radius_m,
                              connector_labels=cfg.connector_label_set)
    floors = segment_floors(clusters, snap, unify_z_m=cfg.floor_unify_m)
    return clusters, floors


def run_pipeline(bundle: DatasetBundle, cfg: PipelineConfig,
                 plan_query: Optional[tuple[str, str]] = None) -> RunOutput:
    """Replay a bundle; deterministic for fixed (bundle, config)."""
    if not bundle.prompts:
        raise ValueError("bundle has an empty prompt list")
    if not bundle.records:
        raise ValueError("bundle has no keyframe records")
    prompt_bank = PromptBank(list(bundle.prompts), bundle.text_bank)

    graph = PoseGraph(gate_m=cfg.keyframe_gate_m,
                      odom_info_weight=cfg.odom_info_weight,
                      n_embedding_rows=len(bundle.image_bank))
    clusters: list[RoomCluster] = []
    floors: dict[int, int] = {}
    loop_results: list[LoopResult] = []
    node_to_record: dict[int, int] = {}
    initial_labels: dict[int, str] = {}
    initial_scores: dict[int, float] = {}
    odometry_poses: dict[int, SE3Pose] = {}

    last_odom: Optional[SE3Pose] = None  # raw odometry pose of last accepted record
    dcs = DcsParams(phi=cfg.dcs_phi)
    opt_options = OptimizeOptions(tol=cfg.opt_tol, max_iters=cfg.opt_max_iters)

    for record in bundle.records:
        if last_odom is None:
            candidate = record.pose
        else:
            rel = last_odom.inverse().compose(record.pose)
            prev_est = graph.keyframes[-1].pose
            candidate = prev_est.compose(rel)
        nid = graph.add_keyframe(candidate, record.stamp, record.embedding_row,
                                 record.features)
        if nid is None:
            continue
        last_odom = record.pose
        node_to_record[nid] = record.id
        odometry_poses[nid] = record.pose

        label, score = classify(record.embedding_row, bundle.image_bank, prompt_bank)
        graph.set_label(nid, label, score)
        initial_labels[nid] = label
        initial_scores[nid] = score

        if len(graph) % cfg.refine_every_k == 0:
            clusters, floors = _refinement_round(graph, cfg)

        if clusters and record.features:
            snap = graph.snapshot()
            results = close_loops(
                nid, snap, clusters, graph, bundle.image_bank, bundle.camera,
                max_candidates=cfg.max_candidates, min_loop_gap=cfg.min_loop_gap,
                min_inliers=cfg.pnp_min_inliers, reproj_px=cfg.pnp_reproj_px,
                ransac_iters=cfg.pnp_ransac_iters,
                loop_info_weight=cfg.loop_info_weight, seed=cfg.seed)
            if results:
                loop_results.extend(results)
                snap = graph.snapshot()
                optimized = optimize(snap, dcs, opt_options)
                graph.apply_optimized_poses(optimized, snap.version)

    # final round so labels, clusters, and floors reflect the final poses
    clusters, floors = _refinement_round(graph, cfg)
    snapshot = graph.snapshot()

    metrics = None
    if bundle.gt is not None:
        metrics = _compute_metrics(snapshot, bundle, cfg, node_to_record,
                                   initial_labels, odometry_poses, loop_results)

    plan_path = None
    if plan_query is not None:
        start, goal = (normalize_label(s) for s in plan_query)
        adjacency = build_adjacency(snapshot, clusters, unit_weights=cfg.unit_weights)
        plan_path = plan(adjacency, start, goal, clusters, snapshot)

    return RunOutput(snapshot=snapshot, clusters=clusters, floors=floors,
                     loop_results=loop_results, node_to_record=node_to_record,
                     initial_labels=initial_labels, initial_scores=initial_scores,
                     odometry_poses=odometry_poses, metrics=metrics,
                     plan_path=plan_path, plan_query=plan_query, config=cfg)


def _gt_labels_by_node(bundle: DatasetBundle, node_to_record: dict[int, int]):
    gt = bundle.gt
    if gt.labels:
        by_record = gt.labels
    elif gt.boxes is not None and gt.trajectory:
        positions = {rid: p.translation for rid, p in gt.trajectory.items()}
        by_record = true_labels_from_boxes(positions, gt.boxes)
    else:
        return None
    return {nid: by_record.get(rid) for nid, rid in node_to_record.items()}


def _compute_metrics(snapshot: GraphSnapshot, bundle: DatasetBundle,
                     cfg: PipelineConfig, node_to_record: dict[int, int],
                     initial_labels: dict[int, str],
                     odometry_poses: dict[int, SE3Pose],
                     loop_results: list[LoopResult]) -> dict:
    gt = bundle.gt
    out: dict = {"schema_version": SCHEMA_VERSION}

    truth = _gt_labels_by_node(bundle, node_to_record)
    if truth is not None:
        final_labels = {kf.id: kf.label for kf in snapshot.keyframes}
        initial = classification_accuracy(initial_labels, truth)
        refined = classification_accuracy(final_labels, truth)
        out["classification"] = {
            "accuracy_initial": initial.accuracy,
            "accuracy_refined": refined.accuracy,
            "nodes_included": refined.included,
            "nodes_excluded": refined.excluded,
        }

    if gt.trajectory:
        gt_by_node = {nid: gt.trajectory[rid]
                      for nid, rid in node_to_record.items() if rid in gt.trajectory}
        ids = sorted(gt_by_node)
        if len(ids) >= 3:
            gt_seq = [gt_by_node[i] for i in ids]
            odo_seq = [odometry_poses[i] for i in ids]
            est_seq = [snapshot.node(i).pose for i in ids]
            out["ate"] = {"odometry_m": ate(odo_seq, gt_seq),
                          "optimized_m": ate(est_seq, gt_seq)}

        query_matches: dict[int, list[int]] = {}
        for r in loop_results:
            query_matches.setdefault(r.candidate.query_id, []).append(r.candidate.candidate_id)
        if query_matches:
            n = max(len(v) for v in query_matches.values())
            tp, fp = pr_counts(query_matches, n, gt_by_node,
                               dist_m=1.0, ang_rad=0.5)
            out["place_recognition"] = {"queries": len(query_matches),
                                        "n": n, "tp": tp, "fp": fp}

    out["loop_edges"] = sum(1 for e in snapshot.edges if e.kind is EdgeKind.LOOP)
    out["nodes"] = len(snapshot.keyframes)
    return out


def export_outputs(run: RunOutput, out_dir: Path, dataset_path: Optional[Path] = None):
    """Write graph.jsonl, clusters.json, trajectory_optimized.jsonl,
    metrics.json, and plan.jsonl (when a plan was requested)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    cluster_of = {}
    for c in run.clusters:
        for m in c.members:
            cluster_of[m] = c.cluster_id

    with open(out / "graph.jsonl", "w") as fh:
        fh.write(json.dumps({"type": "meta", "schema_version": SCHEMA_VERSION}) + "\n")
        for kf in run.snapshot.keyframes:
            cid = cluster_of.get(kf.id)
            fh.write(json.dumps({
                "type": "node", "id": kf.id, "t": kf.stamp,
                "pose": pose_to_list(kf.pose), "label": kf.label,
                "score": kf.label_score,
                "initial_label": run.initial_labels.get(kf.id),
                "cluster": cid,
                "floor": run.floors.get(cid) if cid is not None else None,
                "record_id": run.node_to_record.get(kf.id)}) + "\n")
        for e in run.snapshot.edges:
            fh.write(json.dumps({
                "type": "edge", "from": e.from_id, "to": e.to_id,
                "kind": e.kind.value, "rel_pose": pose_to_list(e.rel_pose),
                "info_weight": e.info_weight}) + "\n")

    with open(out / "clusters.json", "w") as fh:
        json.dump({"schema_version": SCHEMA_VERSION,
                   "clusters": [{"id": c.cluster_id, "label": c.label,
                                 "floor": run.floors.get(c.cluster_id, c.floor),
                                 "mean": [float(x) for x in c.mean_pos],
                                 "members": sorted(c.members)}
                                for c in run.clusters]}, fh, indent=1)

    with open(out / "trajectory_optimized.jsonl", "w") as fh:
        fh.write(json.dumps({"type": "meta", "schema_version": SCHEMA_VERSION}) + "\n")
        for kf in run.snapshot.keyframes:
            fh.write(json.dumps({"id": kf.id, "t": kf.stamp,
                                 "pose": pose_to_list(kf.pose)}) + "\n")

    with open(out / "trajectory_odometry.jsonl", "w") as fh:
        fh.write(json.dumps({"type": "meta", "schema_version": SCHEMA_VERSION}) + "\n")
        for nid in sorted(run.odometry_poses):
            fh.write(json.dumps({"id": nid, "t": run.snapshot.node(nid).stamp,
                                 "pose": pose_to_list(run.odometry_poses[nid])}) + "\n")

    with open(out / "metrics.json", "w") as fh:
        json.dump(run.metrics if run.metrics is not None
                  else {"schema_version": SCHEMA_VERSION}, fh, indent=1)

    if run.plan_query is not None:
        with open(out / "plan.jsonl", "w") as fh:
            fh.write(json.dumps({"type": "meta", "schema_version": SCHEMA_VERSION,
                                 "from": run.plan_query[0], "to": run.plan_query[1],
                                 "reachable": run.plan_path is not None}) + "\n")
            for seq, nid in enumerate(run.plan_path or []):
                kf = run.snapshot.node(nid)
                fh.write(json.dumps({"seq": seq, "id": nid,
                                     "pose": pose_to_list(kf.pose),
                                     "label": kf.label}) + "\n")

    manifest = {"schema_version": SCHEMA_VERSION,
                "dataset": str(dataset_path) if dataset_path else None,
                "plan": list(run.plan_query) if run.plan_query else None,
                "config": {k: getattr(run.config, k)
                           for k in sorted(vars(run.config))}}
    with open(out / "run_manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
