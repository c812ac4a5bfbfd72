"""Command-line pipeline runner.

Subcommands:
    run       replay a dataset bundle through the full pipeline
    simulate  generate a synthetic dataset bundle from a scene spec
    eval      recompute metrics for a finished run directory
    plan      room-to-room shortest path over an exported graph
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .bundle import load_bundle, pose_from_list, save_bundle
from .clustering import RoomCluster
from .config import load_config
from .graph import EdgeKind, GraphEdge, GraphSnapshot, Keyframe
from .metrics import ate, classification_accuracy, pr_counts
from .pipeline import SCHEMA_VERSION, export_outputs, run_pipeline
from .planner import build_adjacency, path_cost, plan
from .semantics import normalize_label
from .simulate import BUILTIN_SCENES, SceneSpec, simulate_scene


def _print_metric(name: str, payload: dict):
    print(json.dumps({"metric": name, **payload}))


def _print_metrics(metrics: dict | None):
    if not metrics:
        return
    for key in ("classification", "ate", "place_recognition"):
        if key in metrics:
            _print_metric(key, metrics[key])
    _print_metric("graph", {"nodes": metrics.get("nodes"),
                            "loop_edges": metrics.get("loop_edges")})


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    bundle = load_bundle(args.dataset)
    for w in bundle.load_warnings:
        print(f"warning: {w}", file=sys.stderr)
    plan_query = None
    if args.plan:
        if ":" not in args.plan:
            print("--plan expects FROM:TO", file=sys.stderr)
            return 2
        start, goal = args.plan.split(":", 1)
        plan_query = (start, goal)
    run = run_pipeline(bundle, cfg, plan_query=plan_query)
    export_outputs(run, args.out, dataset_path=Path(args.dataset).resolve())
    _print_metrics(run.metrics)
    if plan_query is not None:
        _print_metric("plan", {"from": plan_query[0], "to": plan_query[1],
                               "reachable": run.plan_path is not None,
                               "nodes": len(run.plan_path or [])})
    return 0


def cmd_simulate(args) -> int:
    if args.spec.startswith("builtin:"):
        name = args.spec.split(":", 1)[1]
        if name not in BUILTIN_SCENES:
            print(f"unknown builtin scene {name!r}; have {sorted(BUILTIN_SCENES)}",
                  file=sys.stderr)
            return 2
        spec = BUILTIN_SCENES[name](seed=args.seed)
    else:
        spec = SceneSpec.from_json(Path(args.spec).read_text())
        if args.seed is not None:
            spec = dataclasses.replace(spec, seed=args.seed)
    bundle = simulate_scene(spec)
    save_bundle(bundle, args.out)
    print(json.dumps({"metric": "simulate", "records": len(bundle.records),
                      "labels": [p.label for p in bundle.prompts],
                      "out": str(args.out)}))
    return 0


def _load_graph_file(path: Path):
    """Rebuild a snapshot plus node metadata from an exported graph.jsonl."""
    nodes = []
    edges = []
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            if d["type"] == "meta":
                if d.get("schema_version") != SCHEMA_VERSION:
                    raise ValueError(f"unsupported schema {d.get('schema_version')}")
            elif d["type"] == "node":
                nodes.append(d)
            elif d["type"] == "edge":
                edges.append(d)
    kfs = tuple(Keyframe(id=d["id"], stamp=d["t"], pose=pose_from_list(d["pose"]),
                         embedding_row=0, label=d.get("label"),
                         label_score=d.get("score", 0.0))
                for d in sorted(nodes, key=lambda d: d["id"]))
    ges = tuple(GraphEdge(from_id=d["from"], to_id=d["to"],
                          kind=EdgeKind(d["kind"]),
                          rel_pose=pose_from_list(d["rel_pose"]),
                          info_weight=d.get("info_weight", 1.0))
                for d in edges)
    snapshot = GraphSnapshot(keyframes=kfs, edges=ges, version=1)
    meta["nodes"] = nodes
    return snapshot, meta


def _load_clusters_file(path: Path) -> list[RoomCluster]:
    with open(path) as fh:
        data = json.load(fh)
    clusters = []
    for c in data["clusters"]:
        clusters.append(RoomCluster(cluster_id=c["id"], label=c["label"],
                                    members=set(c["members"]),
                                    mean_pos=np.array(c["mean"], dtype=np.float64),
                                    floor=c.get("floor", 0)))
    return clusters


def cmd_eval(args) -> int:
    out = Path(args.out)
    manifest_path = out / "run_manifest.json"
    if not manifest_path.exists():
        print(f"{out} has no run_manifest.json", file=sys.stderr)
        return 2
    manifest = json.loads(manifest_path.read_text())
    dataset = args.dataset or manifest.get("dataset")
    if dataset is None:
        print("manifest records no dataset; pass --dataset", file=sys.stderr)
        return 2
    bundle = load_bundle(dataset)
    if bundle.gt is None:
        print("dataset has no ground truth", file=sys.stderr)
        return 2
    snapshot, meta = _load_graph_file(out / "graph.jsonl")

    metrics: dict = {"schema_version": SCHEMA_VERSION}
    node_rows = meta["nodes"]
    node_to_record = {d["id"]: d.get("record_id") for d in node_rows}
    truth = {d["id"]: bundle.gt.labels.get(d.get("record_id")) for d in node_rows}
    if bundle.gt.labels:
        final = {d["id"]: d.get("label") for d in node_rows}
        initial = {d["id"]: d.get("initial_label") for d in node_rows}
        res_f = classification_accuracy(final, truth)
        res_i = classification_accuracy(initial, truth)
        metrics["classification"] = {
            "accuracy_initial": res_i.accuracy, "accuracy_refined": res_f.accuracy,
            "nodes_included": res_f.included, "nodes_excluded": res_f.excluded}

    if bundle.gt.trajectory:
        gt_by_node = {d["id"]: bundle.gt.trajectory[node_to_record[d["id"]]]
                      for d in node_rows if node_to_record[d["id"]] in bundle.gt.trajectory}
        ids = sorted(gt_by_node)
        if len(ids) >= 3:
            est = [snapshot.node(i).pose for i in ids]
            gt_seq = [gt_by_node[i] for i in ids]
            entry = {"optimized_m": ate(est, gt_seq)}
            odo_path = out / "trajectory_odometry.jsonl"
            if odo_path.exists():
                odo = {}
                with open(odo_path) as fh:
                    for line in fh:
                        d = json.loads(line)
                        if d.get("type") != "meta":
                            odo[d["id"]] = pose_from_list(d["pose"])
                if all(i in odo for i in ids):
                    entry["odometry_m"] = ate([odo[i] for i in ids], gt_seq)
            metrics["ate"] = entry
        query_matches: dict[int, list[int]] = {}
        for e in snapshot.edges:
            if e.kind is EdgeKind.LOOP:
                query_matches.setdefault(e.from_id, []).append(e.to_id)
        if query_matches and len(gt_by_node) >= 1:
            n = max(len(v) for v in query_matches.values())
            tp, fp = pr_counts(query_matches, n, gt_by_node, dist_m=1.0, ang_rad=0.5)
            metrics["place_recognition"] = {"queries": len(query_matches),
                                            "n": n, "tp": tp, "fp": fp}
    metrics["loop_edges"] = sum(1 for e in snapshot.edges if e.kind is EdgeKind.LOOP)
    metrics["nodes"] = len(snapshot.keyframes)
    with open(out / "metrics.json", "w") as fh:
        json.dump(metrics, fh, indent=1)
    _print_metrics(metrics)
    return 0


def cmd_plan(args) -> int:
    graph_path = Path(args.graph)
    snapshot, _ = _load_graph_file(graph_path)
    clusters = _load_clusters_file(graph_path.parent / "clusters.json")
    start = normalize_label(getattr(args, "from"))
    goal = normalize_label(args.to)
    adjacency = build_adjacency(snapshot, clusters, unit_weights=args.unit_weights)
    path = plan(adjacency, start, goal, clusters, snapshot)
    if path is None:
        print(json.dumps({"metric": "plan", "from": start, "to": goal,
                          "reachable": False}))
        return 1
    print(json.dumps({"metric": "plan", "from": start, "to": goal,
                      "reachable": True, "cost": path_cost(adjacency, path),
                      "path": path}))
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roomslam",
        description="Topological semantic SLAM on precomputed embeddings")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="replay a dataset bundle")
    p_run.add_argument("--dataset", required=True, help="bundle directory")
    p_run.add_argument("--config", default=None, help="flat key=value config file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--plan", default=None, metavar="FROM:TO",
                       help="also plan a room-to-room path")
    p_run.set_defaults(func=cmd_run)

    p_sim = sub.add_parser("simulate", help="generate a synthetic bundle")
    p_sim.add_argument("--spec", required=True,
                       help="scene spec JSON file, or builtin:<name>")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_eval = sub.add_parser("eval", help="recompute metrics for a run directory")
    p_eval.add_argument("--out", required=True, help="run output directory")
    p_eval.add_argument("--dataset", default=None,
                        help="override the dataset recorded in the manifest")
    p_eval.set_defaults(func=cmd_eval)

    p_plan = sub.add_parser("plan", help="plan between room labels")
    p_plan.add_argument("--graph", required=True, help="graph.jsonl from a run")
    p_plan.add_argument("--from", required=True, dest="from")
    p_plan.add_argument("--to", required=True)
    p_plan.add_argument("--unit-weights", action="store_true", dest="unit_weights")
    p_plan.set_defaults(func=cmd_plan)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
