"""Open-vocabulary room labeling on the pose graph.

Each keyframe carries a precomputed image-embedding row; a prompt bank maps
room labels to rows of a text-embedding bank.  Classification is a cosine
argmax, refinement is a single synchronous majority vote over each node's
nearest neighbors, and staircases are flagged from net height change over a
sliding window of consecutive keyframes.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .graph import GraphSnapshot, all_neighbors

STAIRS_LABEL = "stairs"  # reserved: drives floor segmentation


class EmbeddingBank:
    """Row matrix of L2-normalized float32 embedding vectors."""

    def __init__(self, rows: np.ndarray, normalize: bool = True):
        rows = np.asarray(rows, dtype=np.float32)
        if rows.ndim != 2:
            raise ValueError("embedding bank must be a 2-D array")
        if normalize and len(rows):
            norms = np.linalg.norm(rows, axis=1, keepdims=True)
            if np.any(norms == 0):
                raise ValueError("embedding bank contains a zero row")
            rows = rows / norms
        self.rows = rows
        self.rows.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def __len__(self) -> int:
        return self.rows.shape[0]

    def row(self, index: int) -> np.ndarray:
        if not 0 <= index < len(self):
            raise IndexError(f"embedding row {index} out of range (bank has {len(self)})")
        return self.rows[index]


def normalize_label(name: str) -> str:
    label = name.strip().lower()
    if not label:
        raise ValueError("room label must be non-empty")
    return label


@dataclass(frozen=True)
class PromptEntry:
    label: str
    text: str
    row: int


class PromptBank:
    """Room labels paired with their text-embedding rows; label order is the
    classification tie-break order."""

    def __init__(self, entries: list[PromptEntry], bank: EmbeddingBank):
        if not entries:
            raise ValueError("prompt bank needs at least one entry")
        seen = set()
        for e in entries:
            label = normalize_label(e.label)
            if label in seen:
                raise ValueError(f"duplicate prompt label {label!r}")
            seen.add(label)
            bank.row(e.row)  # raises if dangling
        self.entries = [PromptEntry(normalize_label(e.label), e.text, e.row) for e in entries]
        self.bank = bank

    @property
    def labels(self) -> list[str]:
        return [e.label for e in self.entries]

    def matrix(self) -> np.ndarray:
        """(n_prompts, dim) text-embedding matrix in entry order."""
        return self.bank.rows[[e.row for e in self.entries]]


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """a.b / (|a||b|); symmetric, invariant to positive rescaling."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity undefined for zero vector")
    return float(np.dot(a, b) / (na * nb))


def classify(embedding_row: int, image_bank: EmbeddingBank,
             prompts: PromptBank) -> tuple[str, float]:
    """Best-scoring room label for one image embedding.

    Ties go to the earliest prompt entry; deterministic for fixed banks.
    """
    vec = image_bank.row(embedding_row).astype(np.float64)
    mat = prompts.matrix().astype(np.float64)
    norms = np.linalg.norm(mat, axis=1) * np.linalg.norm(vec)
    scores = mat @ vec / norms
    best = int(np.argmax(scores))  # argmax takes the first max: prompt order
    return prompts.entries[best].label, float(scores[best])


def classify_all(snapshot_rows: list[int], image_bank: EmbeddingBank,
                 prompts: PromptBank) -> list[tuple[str, float]]:
    """classify() for a batch of embedding rows."""
    return [classify(r, image_bank, prompts) for r in snapshot_rows]


def refine_pass(snapshot: GraphSnapshot, count: int,
                metric: str = "euclidean") -> dict[int, str]:
    """One synchronous label-propagation pass.

    Every node votes with its `count` nearest neighbors' pre-pass labels; a
    node adopts the modal neighbor label only when that label is the unique
    mode and differs from its own.  Returns the full post-pass label map.
    """
    labels = snapshot.labels()
    for nid, lab in labels.items():
        if lab is None:
            raise ValueError(f"node {nid} is unlabeled; classify before refining")
    nbrs = all_neighbors(snapshot, count, metric=metric)
    out: dict[int, str] = {}
    for kf in snapshot.keyframes:
        votes = Counter(labels[j] for j in nbrs[kf.id])
        out[kf.id] = _vote_outcome(votes, labels[kf.id])
    return out


def _vote_outcome(votes: Counter, current: str) -> str:
    """Unique modal label wins if it differs from `current`; any tie for the
    mode keeps the current label."""
    if not votes:
        return current
    ranked = votes.most_common()
    top_label, top_count = ranked[0]
    if len(ranked) > 1 and ranked[1][1] == top_count:
        return current  # no unique mode
    return top_label


def detect_stairs(snapshot: GraphSnapshot, window: int,
                  dz_threshold: float = 0.5) -> set[int]:
    """Nodes lying in any window of `window` consecutive keyframes whose net
    |z| change exceeds `dz_threshold`.  Net change, not cumulative: only the
    window endpoints matter."""
    if window < 2:
        raise ValueError("window must be >= 2")
    kfs = sorted(snapshot.keyframes, key=lambda k: k.id)
    n = len(kfs)
    flagged: set[int] = set()
    if n < window:
        return flagged
    z = np.array([kf.pose.translation[2] for kf in kfs])
    for start in range(n - window + 1):
        if abs(z[start + window - 1] - z[start]) > dz_threshold:
            flagged.update(kfs[k].id for k in range(start, start + window))
    return flagged
