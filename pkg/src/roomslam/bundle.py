"""On-disk dataset bundles.

A bundle directory holds everything one mapping run consumes:

    keyframes.jsonl       one record per line: {id, t, pose, embedding_row,
                          features?, gt_label?}
    embeddings.bin        image embeddings (binary, see below)
    text_embeddings.bin   prompt embeddings, same format
    prompts.json          label -> (text, embedding row)
    camera.json           pinhole intrinsics
    gt/                   optional: gt_labels.jsonl, gt_trajectory.jsonl,
                          gt_boxes.json

The embedding file layout is: magic "LEXE", u32 version (=1), u32 row count,
u32 dim, then row-major float32, all little-endian.  Poses serialize as
[x, y, z, qx, qy, qz, qw].  Rows are re-normalized at load; a row whose norm
is off by more than 1e-3 produces a warning.
"""

from __future__ import annotations

import base64
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import SE3Pose
from .graph import LocalFeature
from .metrics import RoomBox
from .pnp import CameraIntrinsics
from .semantics import EmbeddingBank, PromptEntry

logger = logging.getLogger(__name__)

EMBEDDINGS_MAGIC = b"LEXE"
EMBEDDINGS_VERSION = 1
NORM_WARN_TOL = 1e-3


class BundleError(Exception):
    pass


class BadMagicError(BundleError):
    pass


class VersionMismatchError(BundleError):
    pass


class SizeMismatchError(BundleError):
    pass


class DanglingRowError(BundleError):
    pass


def write_embeddings(path: Path, rows: np.ndarray):
    rows = np.ascontiguousarray(rows, dtype="<f4")
    if rows.ndim != 2:
        raise ValueError("embedding matrix must be 2-D")
    header = EMBEDDINGS_MAGIC + struct.pack("<III", EMBEDDINGS_VERSION,
                                            rows.shape[0], rows.shape[1])
    Path(path).write_bytes(header + rows.tobytes())


def read_embeddings(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16:
        raise SizeMismatchError(f"{path}: too short for a header")
    if data[:4] != EMBEDDINGS_MAGIC:
        raise BadMagicError(f"{path}: bad magic {data[:4]!r}")
    version, count, dim = struct.unpack("<III", data[4:16])
    if version != EMBEDDINGS_VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {EMBEDDINGS_VERSION}")
    expected = 16 + 4 * count * dim
    if len(data) != expected:
        raise SizeMismatchError(f"{path}: {len(data)} bytes, header implies {expected}")
    return np.frombuffer(data[16:], dtype="<f4").reshape(count, dim).copy()


def pose_to_list(pose: SE3Pose) -> list[float]:
    return [*map(float, pose.translation), *map(float, pose.rotation)]


def pose_from_list(values) -> SE3Pose:
    v = list(map(float, values))
    if len(v) != 7:
        raise BundleError(f"pose must have 7 values, got {len(v)}")
    return SE3Pose(np.array(v[:3]), np.array(v[3:]))


@dataclass
class KeyframeRecord:
    """One replayable keyframe candidate: odometry pose plus embedding row."""

    id: int
    stamp: float
    pose: SE3Pose
    embedding_row: int
    features: Optional[tuple[LocalFeature, ...]] = None
    gt_label: Optional[str] = None


@dataclass
class GroundTruthData:
    labels: dict[int, Optional[str]] = field(default_factory=dict)
    trajectory: dict[int, SE3Pose] = field(default_factory=dict)
    boxes: Optional[list[RoomBox]] = None


@dataclass
class DatasetBundle:
    records: list[KeyframeRecord]
    image_bank: EmbeddingBank
    text_bank: EmbeddingBank
    prompts: list[PromptEntry]
    camera: CameraIntrinsics
    gt: Optional[GroundTruthData] = None
    load_warnings: list[str] = field(default_factory=list)


def _feature_to_dict(f: LocalFeature) -> dict:
    return {"u": float(f.pixel[0]), "v": float(f.pixel[1]),
            "X": float(f.point_cam[0]), "Y": float(f.point_cam[1]),
            "Z": float(f.point_cam[2]),
            "desc_b64": base64.b64encode(f.descriptor).decode("ascii")}


def _feature_from_dict(d: dict) -> LocalFeature:
    return LocalFeature(pixel=np.array([d["u"], d["v"]]),
                        point_cam=np.array([d["X"], d["Y"], d["Z"]]),
                        descriptor=base64.b64decode(d["desc_b64"]))


def save_bundle(bundle: DatasetBundle, out_dir: Path):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_embeddings(out / "embeddings.bin", bundle.image_bank.rows)
    write_embeddings(out / "text_embeddings.bin", bundle.text_bank.rows)

    with open(out / "keyframes.jsonl", "w") as fh:
        for r in bundle.records:
            obj = {"id": r.id, "t": r.stamp, "pose": pose_to_list(r.pose),
                   "embedding_row": r.embedding_row}
            if r.features is not None:
                obj["features"] = [_feature_to_dict(f) for f in r.features]
            if r.gt_label is not None:
                obj["gt_label"] = r.gt_label
            fh.write(json.dumps(obj) + "\n")

    with open(out / "prompts.json", "w") as fh:
        json.dump({"version": 1,
                   "entries": [{"label": p.label, "text": p.text, "row": p.row}
                               for p in bundle.prompts]}, fh, indent=1)

    cam = bundle.camera
    with open(out / "camera.json", "w") as fh:
        json.dump({"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
                   "width": cam.width, "height": cam.height}, fh, indent=1)

    if bundle.gt is not None:
        gt_dir = out / "gt"
        gt_dir.mkdir(exist_ok=True)
        with open(gt_dir / "gt_labels.jsonl", "w") as fh:
            for rid in sorted(bundle.gt.labels):
                fh.write(json.dumps({"id": rid, "label": bundle.gt.labels[rid]}) + "\n")
        with open(gt_dir / "gt_trajectory.jsonl", "w") as fh:
            for rid in sorted(bundle.gt.trajectory):
                fh.write(json.dumps({"id": rid,
                                     "pose": pose_to_list(bundle.gt.trajectory[rid])}) + "\n")
        if bundle.gt.boxes is not None:
            with open(gt_dir / "gt_boxes.json", "w") as fh:
                json.dump({"boxes": [{"label": b.label,
                                      "min": [float(x) for x in b.min_corner],
                                      "max": [float(x) for x in b.max_corner]}
                                     for b in bundle.gt.boxes]}, fh, indent=1)


def _load_bank(path: Path, warnings: list[str], name: str) -> EmbeddingBank:
    raw = read_embeddings(path)
    if len(raw):
        norms = np.linalg.norm(raw.astype(np.float64), axis=1)
        if np.any(norms == 0):
            raise BundleError(f"{name}: zero embedding row")
        off = np.abs(norms - 1.0) > NORM_WARN_TOL
        if np.any(off):
            msg = (f"{name}: {int(np.sum(off))} rows deviate from unit norm "
                   f"by more than {NORM_WARN_TOL}; renormalized")
            warnings.append(msg)
            logger.warning(msg)
    return EmbeddingBank(raw, normalize=True)


def load_bundle(path: Path) -> DatasetBundle:
    """Load and fully validate a bundle directory.

    Raises FileNotFoundError for missing files and a BundleError subclass for
    each structural defect; normalization deviations are collected in
    `load_warnings` on the returned bundle.
    """
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"bundle directory {root} does not exist")
    for required in ("keyframes.jsonl", "embeddings.bin", "text_embeddings.bin",
                     "prompts.json", "camera.json"):
        if not (root / required).exists():
            raise FileNotFoundError(f"bundle is missing {required}")

    warnings: list[str] = []
    image_bank = _load_bank(root / "embeddings.bin", warnings, "embeddings.bin")
    text_bank = _load_bank(root / "text_embeddings.bin", warnings, "text_embeddings.bin")

    with open(root / "camera.json") as fh:
        c = json.load(fh)
    camera = CameraIntrinsics(fx=c["fx"], fy=c["fy"], cx=c["cx"], cy=c["cy"],
                              width=c["width"], height=c["height"])

    with open(root / "prompts.json") as fh:
        pj = json.load(fh)
    prompts = [PromptEntry(label=e["label"], text=e.get("text", e["label"]),
                           row=int(e["row"])) for e in pj["entries"]]
    for p in prompts:
        if not 0 <= p.row < len(text_bank):
            raise DanglingRowError(f"prompt {p.label!r} references text row {p.row}")

    records: list[KeyframeRecord] = []
    last_stamp = None
    with open(root / "keyframes.jsonl") as fh:
        for line_no, line in enumerate(fh):
            if not line.strip():
                continue
            d = json.loads(line)
            row = int(d["embedding_row"])
            if not 0 <= row < len(image_bank):
                raise DanglingRowError(
                    f"keyframes.jsonl line {line_no}: embedding_row {row} out of range")
            stamp = float(d["t"])
            if last_stamp is not None and stamp <= last_stamp:
                raise BundleError(
                    f"keyframes.jsonl line {line_no}: timestamps must strictly increase")
            last_stamp = stamp
            features = None
            if "features" in d:
                features = tuple(_feature_from_dict(f) for f in d["features"])
                for f in features:
                    u, v = f.pixel
                    if not (0 <= u <= camera.width - 1 and 0 <= v <= camera.height - 1):
                        raise BundleError(
                            f"keyframes.jsonl line {line_no}: feature pixel ({u}, {v}) "
                            "outside image bounds")
            records.append(KeyframeRecord(
                id=int(d["id"]), stamp=stamp, pose=pose_from_list(d["pose"]),
                embedding_row=row, features=features, gt_label=d.get("gt_label")))

    gt = _load_gt(root / "gt") if (root / "gt").is_dir() else None
    return DatasetBundle(records=records, image_bank=image_bank, text_bank=text_bank,
                         prompts=prompts, camera=camera, gt=gt,
                         load_warnings=warnings)


def _load_gt(gt_dir: Path) -> GroundTruthData:
    gt = GroundTruthData()
    labels_path = gt_dir / "gt_labels.jsonl"
    if labels_path.exists():
        with open(labels_path) as fh:
            for line in fh:
                if line.strip():
                    d = json.loads(line)
                    gt.labels[int(d["id"])] = d["label"]
    traj_path = gt_dir / "gt_trajectory.jsonl"
    if traj_path.exists():
        with open(traj_path) as fh:
            for line in fh:
                if line.strip():
                    d = json.loads(line)
                    gt.trajectory[int(d["id"])] = pose_from_list(d["pose"])
    boxes_path = gt_dir / "gt_boxes.json"
    if boxes_path.exists():
        with open(boxes_path) as fh:
            bj = json.load(fh)
        gt.boxes = [RoomBox(label=b["label"], min_corner=np.array(b["min"]),
                            max_corner=np.array(b["max"])) for b in bj["boxes"]]
    return gt
