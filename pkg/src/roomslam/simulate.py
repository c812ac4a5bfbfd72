"""Deterministic synthetic indoor scenes.

A scene is a set of labeled axis-aligned room boxes plus a waypoint
trajectory walked at constant speed.  The generator derives everything a
dataset bundle needs:

  * one unit "archetype" embedding per room label (seeded, rejection-sampled
    so archetypes stay pairwise dissimilar); the text bank is exactly the
    archetype matrix, so classification is trivially correct at zero noise
  * per-keyframe image embeddings: normalize(archetype + sigma * gaussian)
  * ground-truth poses along the trajectory, camera facing the walk direction
  * odometry poses: truth plus drift linear in distance traveled (position
    offset per meter, yaw offset per meter), so the drift integrates in
    closed form
  * per-room 3D landmarks with unique binary descriptors, projected through
    the pinhole camera at the true pose to produce local features

Identical spec and seed give bit-identical bundles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bundle import DatasetBundle, GroundTruthData, KeyframeRecord
from .geometry import SE3Pose, look_at_rotation
from .graph import LocalFeature
from .metrics import RoomBox, label_from_boxes
from .pnp import CameraIntrinsics
from .semantics import EmbeddingBank, PromptEntry


class SimulationError(RuntimeError):
    pass


DEFAULT_CAMERA = CameraIntrinsics(fx=320.0, fy=320.0, cx=320.0, cy=240.0,
                                  width=640, height=480)


@dataclass(frozen=True)
class RoomSpec:
    label: str
    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]
    archetype_seed: Optional[int] = None  # fixes this label's archetype draw


@dataclass(frozen=True)
class NoiseSpec:
    embedding_sigma: float = 0.0
    drift_per_m: tuple[float, float, float] = (0.0, 0.0, 0.0)
    yaw_drift_per_m: float = 0.0
    outlier_loop_fraction: float = 0.0  # consumed by benchmark graph builders

    def __post_init__(self):
        if self.embedding_sigma < 0:
            raise ValueError("embedding sigma must be >= 0")
        if not 0 <= self.outlier_loop_fraction <= 1:
            raise ValueError("outlier fraction must be in [0, 1]")


@dataclass(frozen=True)
class SceneSpec:
    rooms: tuple[RoomSpec, ...]
    waypoints: tuple[tuple[float, float, float], ...]
    speed_mps: float = 1.0
    keyframe_spacing_m: float = 0.6
    embedding_dim: int = 32
    landmarks_per_room: int = 100
    feature_max_range_m: float = 8.0
    max_features_per_frame: int = 120
    descriptor_bytes: int = 32
    max_archetype_cos: float = 0.3
    noise: NoiseSpec = NoiseSpec()
    seed: int = 0

    def to_json(self) -> str:
        d = {
            "rooms": [{"label": r.label, "min": list(r.min_corner),
                       "max": list(r.max_corner),
                       **({"archetype_seed": r.archetype_seed}
                          if r.archetype_seed is not None else {})}
                      for r in self.rooms],
            "waypoints": [list(w) for w in self.waypoints],
            "speed_mps": self.speed_mps,
            "keyframe_spacing_m": self.keyframe_spacing_m,
            "embedding_dim": self.embedding_dim,
            "landmarks_per_room": self.landmarks_per_room,
            "feature_max_range_m": self.feature_max_range_m,
            "max_features_per_frame": self.max_features_per_frame,
            "descriptor_bytes": self.descriptor_bytes,
            "max_archetype_cos": self.max_archetype_cos,
            "noise": {"embedding_sigma": self.noise.embedding_sigma,
                      "drift_per_m": list(self.noise.drift_per_m),
                      "yaw_drift_per_m": self.noise.yaw_drift_per_m,
                      "outlier_loop_fraction": self.noise.outlier_loop_fraction},
            "seed": self.seed,
        }
        return json.dumps(d, indent=1)

    @staticmethod
    def from_json(text: str) -> "SceneSpec":
        d = json.loads(text)
        rooms = tuple(RoomSpec(label=r["label"], min_corner=tuple(r["min"]),
                               max_corner=tuple(r["max"]),
                               archetype_seed=r.get("archetype_seed"))
                      for r in d["rooms"])
        noise = NoiseSpec(
            embedding_sigma=d.get("noise", {}).get("embedding_sigma", 0.0),
            drift_per_m=tuple(d.get("noise", {}).get("drift_per_m", (0, 0, 0))),
            yaw_drift_per_m=d.get("noise", {}).get("yaw_drift_per_m", 0.0),
            outlier_loop_fraction=d.get("noise", {}).get("outlier_loop_fraction", 0.0))
        return SceneSpec(
            rooms=rooms, waypoints=tuple(tuple(w) for w in d["waypoints"]),
            speed_mps=d.get("speed_mps", 1.0),
            keyframe_spacing_m=d.get("keyframe_spacing_m", 0.6),
            embedding_dim=d.get("embedding_dim", 32),
            landmarks_per_room=d.get("landmarks_per_room", 100),
            feature_max_range_m=d.get("feature_max_range_m", 8.0),
            max_features_per_frame=d.get("max_features_per_frame", 120),
            descriptor_bytes=d.get("descriptor_bytes", 32),
            max_archetype_cos=d.get("max_archetype_cos", 0.3),
            noise=noise, seed=d.get("seed", 0))


def _draw_archetypes(spec: SceneSpec) -> dict[str, np.ndarray]:
    """One unit vector per label, pairwise cosine <= max_archetype_cos."""
    labels: list[str] = []
    seeds: dict[str, Optional[int]] = {}
    for r in spec.rooms:
        if r.label not in seeds:
            labels.append(r.label)
            seeds[r.label] = r.archetype_seed
    out: dict[str, np.ndarray] = {}
    master = np.random.default_rng([spec.seed, 7])
    for label in labels:
        rng = master if seeds[label] is None else np.random.default_rng(seeds[label])
        for _ in range(5000):
            v = rng.standard_normal(spec.embedding_dim)
            v /= np.linalg.norm(v)
            if all(abs(float(v @ u)) <= spec.max_archetype_cos for u in out.values()):
                out[label] = v
                break
        else:
            raise SimulationError(
                f"could not draw a separated archetype for {label!r}: "
                f"{len(labels)} labels may be too many for dimension {spec.embedding_dim}")
    return out


@dataclass
class _Station:
    position: np.ndarray
    forward: np.ndarray
    arc_length: float


def _trajectory_stations(spec: SceneSpec) -> list[_Station]:
    pts = [np.asarray(w, dtype=np.float64) for w in spec.waypoints]
    if len(pts) < 2:
        raise SimulationError("trajectory needs at least two waypoints")
    seg_vec = [b - a for a, b in zip(pts[:-1], pts[1:])]
    seg_len = [float(np.linalg.norm(v)) for v in seg_vec]
    if any(l < 1e-9 for l in seg_len):
        raise SimulationError("zero-length trajectory segment")
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = float(cum[-1])
    n = int(np.floor(total / spec.keyframe_spacing_m)) + 1
    stations = []
    for k in range(n):
        s = k * spec.keyframe_spacing_m
        i = int(np.searchsorted(cum, s, side="right") - 1)
        i = min(i, len(seg_vec) - 1)
        frac = (s - cum[i]) / seg_len[i]
        pos = pts[i] + frac * seg_vec[i]
        stations.append(_Station(position=pos, forward=seg_vec[i] / seg_len[i],
                                 arc_length=s))
    return stations


def _unique_descriptors(rng: np.random.Generator, count: int, nbytes: int) -> list[bytes]:
    seen = set()
    out = []
    while len(out) < count:
        d = rng.bytes(nbytes)
        if d not in seen:
            seen.add(d)
            out.append(d)
    return out


def simulate_scene(spec: SceneSpec) -> DatasetBundle:
    """Generate an in-memory dataset bundle for a scene; save with
    bundle.save_bundle.  Deterministic for a fixed (spec, seed)."""
    boxes = [RoomBox(label=r.label, min_corner=np.array(r.min_corner),
                     max_corner=np.array(r.max_corner)) for r in spec.rooms]
    archetypes = _draw_archetypes(spec)
    stations = _trajectory_stations(spec)

    # landmarks live inside their room box, a little inset from the faces;
    # they are visible only from inside the same box, a crude stand-in for
    # walls and floors blocking line of sight
    rng_marks = np.random.default_rng([spec.seed, 11])
    rng_desc = np.random.default_rng([spec.seed, 13])
    landmarks = []
    landmark_room = []
    for ri, r in enumerate(spec.rooms):
        lo = np.asarray(r.min_corner) + 0.25
        hi = np.asarray(r.max_corner) - 0.25
        landmarks.append(rng_marks.uniform(lo, hi, size=(spec.landmarks_per_room, 3)))
        landmark_room.extend([ri] * spec.landmarks_per_room)
    landmarks = np.concatenate(landmarks, axis=0)
    landmark_room = np.array(landmark_room)
    descriptors = _unique_descriptors(rng_desc, len(landmarks), spec.descriptor_bytes)

    rng_embed = np.random.default_rng([spec.seed, 17])
    drift_vec = np.asarray(spec.noise.drift_per_m, dtype=np.float64)

    records: list[KeyframeRecord] = []
    gt = GroundTruthData(boxes=boxes)
    rows = np.zeros((len(stations), spec.embedding_dim), dtype=np.float64)
    for k, st in enumerate(stations):
        gt_label = label_from_boxes(st.position, boxes)
        R_true = look_at_rotation(st.forward)
        true_pose = SE3Pose.from_rt(R_true, st.position)

        # embedding: archetype of the containing room (nearest room if the
        # station falls between boxes) plus isotropic noise
        noise = rng_embed.standard_normal(spec.embedding_dim)
        if gt_label is None:
            centers = [(b.min_corner + b.max_corner) / 2.0 for b in boxes]
            nearest = int(np.argmin([np.linalg.norm(st.position - c) for c in centers]))
            base = archetypes[boxes[nearest].label]
        else:
            base = archetypes[gt_label]
        vec = base + spec.noise.embedding_sigma * noise
        nv = np.linalg.norm(vec)
        if nv < 1e-9:
            vec, nv = base, 1.0
        rows[k] = vec / nv

        # odometry: drift linear in arc length, in the world frame
        odo_pos = st.position + st.arc_length * drift_vec
        yaw = st.arc_length * spec.noise.yaw_drift_per_m
        Rz = np.array([[np.cos(yaw), -np.sin(yaw), 0.0],
                       [np.sin(yaw), np.cos(yaw), 0.0],
                       [0.0, 0.0, 1.0]])
        odo_pose = SE3Pose.from_rt(Rz @ R_true, odo_pos)

        cam_room = _containing_room(st.position, boxes)
        features = _visible_features(st.position, R_true, landmarks, landmark_room,
                                     cam_room, descriptors, spec)
        records.append(KeyframeRecord(id=k, stamp=st.arc_length / spec.speed_mps,
                                      pose=odo_pose, embedding_row=k,
                                      features=features, gt_label=gt_label))
        gt.labels[k] = gt_label
        gt.trajectory[k] = true_pose

    label_order = list(archetypes)
    text_rows = np.stack([archetypes[l] for l in label_order])
    prompts = [PromptEntry(label=l, text=f"a photo of a {l}", row=i)
               for i, l in enumerate(label_order)]
    return DatasetBundle(
        records=records,
        image_bank=EmbeddingBank(rows.astype(np.float32)),
        text_bank=EmbeddingBank(text_rows.astype(np.float32)),
        prompts=prompts, camera=DEFAULT_CAMERA, gt=gt)


def _containing_room(position: np.ndarray, boxes) -> int:
    for i, b in enumerate(boxes):
        if b.contains(position):
            return i
    centers = [(b.min_corner + b.max_corner) / 2.0 for b in boxes]
    return int(np.argmin([np.linalg.norm(position - c) for c in centers]))


def _visible_features(position: np.ndarray, R_cam: np.ndarray, landmarks: np.ndarray,
                      landmark_room: np.ndarray, cam_room: int,
                      descriptors: list[bytes], spec: SceneSpec):
    cam = DEFAULT_CAMERA
    p_cam = (landmarks - position) @ R_cam  # R_cam^T (L - t), row-wise
    z = p_cam[:, 2]
    ok = (landmark_room == cam_room) & (z > 0.3) & (z < spec.feature_max_range_m)
    if not np.any(ok):
        return tuple()
    idx = np.where(ok)[0]
    proj = cam.project(p_cam[idx])
    inb = cam.in_bounds(proj)
    idx = idx[inb]
    proj = proj[inb]
    if len(idx) > spec.max_features_per_frame:
        nearest = np.argsort(p_cam[idx, 2], kind="stable")[:spec.max_features_per_frame]
        keep = np.sort(nearest)  # nearest by depth, original order restored
        idx = idx[keep]
        proj = proj[keep]
    return tuple(LocalFeature(pixel=proj[k], point_cam=p_cam[int(i)],
                              descriptor=descriptors[int(i)])
                 for k, i in enumerate(idx))


# ---------------------------------------------------------------------------
# ready-made scenes used by the demos and the verification suite
# ---------------------------------------------------------------------------

def multifloor_scene(embedding_sigma: float = 0.0, seed: int = 0,
                     drift_per_m: tuple[float, float, float] = (0.003, 0.002, 0.0),
                     yaw_drift_per_m: float = 0.0005) -> SceneSpec:
    """Two-floor office: a floor-0 circuit walked twice (the second lap
    closes loops against the first), then a staircase up to a bedroom.

    The circuit perimeter is an exact multiple of the keyframe spacing, so
    second-lap keyframes coincide with first-lap ones in both position and
    heading; the stair approach leaves the circuit mid-run into a
    stairs-labeled box, so the departure never revisits labeled space from a
    conflicting direction.
    """
    rooms = (
        RoomSpec("office", (0.0, 0.0, -0.6), (3.1, 4.7, 2.0)),
        RoomSpec("office", (3.1, 0.0, -0.6), (6.3, 4.2, 2.0)),
        RoomSpec("corridor", (6.3, 0.0, -0.6), (12.8, 2.8, 2.0)),
        RoomSpec("corridor", (6.3, 3.2, -0.6), (12.8, 6.0, 2.0)),
        RoomSpec("kitchen", (12.8, 0.0, -0.6), (20.0, 6.0, 2.0)),
        RoomSpec("stairs", (3.1, 4.2, -0.6), (6.3, 10.0, 4.2)),
        RoomSpec("bedroom", (0.0, 0.0, 2.2), (6.0, 4.2, 5.0)),
    )
    lap = [(3.0, 1.4, 0.0), (17.0, 1.4, 0.0), (17.0, 4.5, 0.0),
           (3.0, 4.5, 0.0)]
    waypoints = (
        lap[0], lap[1], lap[2], lap[3],      # lap 1 (perimeter 34.2 m)
        lap[0], lap[1], lap[2],              # lap 2 revisits lap-1 stations
        (4.7, 4.5, 0.0),                     # ... but stops mid north run
        (4.7, 6.5, 0.0),                     # north through the stairwell strip
        (4.7, 8.5, 3.0),                     # the climb
        (3.2, 8.5, 3.0),                     # flat run-out, still stairwell
        (3.2, 0.3, 3.0),                     # south through the bedroom
    )
    return SceneSpec(rooms=rooms, waypoints=waypoints, seed=seed,
                     feature_max_range_m=4.0,
                     noise=NoiseSpec(embedding_sigma=embedding_sigma,
                                     drift_per_m=drift_per_m,
                                     yaw_drift_per_m=yaw_drift_per_m))


def four_room_scene(embedding_sigma: float = 0.0, seed: int = 0) -> SceneSpec:
    """Flat 2x2 grid of rooms walked in a serpentine; the workhorse for
    classification-noise experiments."""
    rooms = (
        RoomSpec("office", (0.0, 6.0, -0.6), (6.0, 12.0, 2.0)),
        RoomSpec("kitchen", (6.0, 6.0, -0.6), (12.0, 12.0, 2.0)),
        RoomSpec("lounge", (6.0, 0.0, -0.6), (12.0, 6.0, 2.0)),
        RoomSpec("bathroom", (0.0, 0.0, -0.6), (6.0, 6.0, 2.0)),
    )
    waypoints = (
        (1.0, 7.0, 0.0), (5.0, 7.0, 0.0), (5.0, 9.0, 0.0), (1.0, 9.0, 0.0),
        (1.0, 11.0, 0.0), (5.0, 11.0, 0.0),
        (7.0, 11.0, 0.0), (11.0, 11.0, 0.0), (11.0, 9.0, 0.0), (7.0, 9.0, 0.0),
        (7.0, 7.0, 0.0), (11.0, 7.0, 0.0),
        (11.0, 5.0, 0.0), (7.0, 5.0, 0.0), (7.0, 3.0, 0.0), (11.0, 3.0, 0.0),
        (11.0, 1.0, 0.0), (7.0, 1.0, 0.0),
        (5.0, 1.0, 0.0), (1.0, 1.0, 0.0), (1.0, 3.0, 0.0), (5.0, 3.0, 0.0),
        (5.0, 5.0, 0.0), (1.0, 5.0, 0.0),
    )
    return SceneSpec(rooms=rooms, waypoints=waypoints, seed=seed,
                     noise=NoiseSpec(embedding_sigma=embedding_sigma))


def home_scene(seed: int = 0) -> SceneSpec:
    """Single-story home strip: bathroom, corridor, kitchen, garden.  Used by
    the room-to-room planning demo."""
    rooms = (
        RoomSpec("bathroom", (0.0, 0.0, -0.6), (4.0, 4.0, 2.0)),
        RoomSpec("corridor", (4.0, 0.0, -0.6), (10.0, 4.0, 2.0)),
        RoomSpec("kitchen", (10.0, 0.0, -0.6), (16.0, 4.0, 2.0)),
        RoomSpec("garden", (16.0, 0.0, -0.6), (24.0, 4.0, 2.0)),
    )
    waypoints = ((1.0, 2.0, 0.0), (22.5, 2.0, 0.0))
    return SceneSpec(rooms=rooms, waypoints=waypoints, seed=seed)


BUILTIN_SCENES = {
    "multifloor": multifloor_scene,
    "fourroom": four_room_scene,
    "home": home_scene,
}
