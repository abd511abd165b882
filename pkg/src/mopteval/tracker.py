"""Embedding-based track id reconstruction across frames, plus the batch-hard
triplet loss as an embedding-quality diagnostic."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import InputError
from .fusion import InstanceCandidate

FORBIDDEN = np.inf


@dataclass(frozen=True)
class TrackerConfig:
    confidence_threshold: float = 0.5  # u_s: only candidates above it are tracked
    window: int = 3  # N_T, frames
    margin: float = 0.2  # alpha, triplet loss margin
    max_distance: float | None = None  # optional association gate, off by default

    def __post_init__(self):
        if not (0.0 <= self.confidence_threshold <= 1.0):
            raise InputError("confidence threshold must be in [0, 1]")
        if self.window < 1:
            raise InputError("window must be >= 1")
        if self.margin < 0:
            raise InputError("margin must be >= 0")


@dataclass
class TrackEntry:
    frame_index: int
    embedding: np.ndarray
    class_id: int


@dataclass
class TrackerState:
    tracks: dict[int, list[TrackEntry]] = field(default_factory=dict)
    next_id: int = 1
    last_frame_index: int | None = None

    def active_tracks(self, frame_index: int, window: int) -> list[int]:
        """Track ids whose most recent observation is within the window."""
        out = []
        for tid in sorted(self.tracks):
            entries = self.tracks[tid]
            if entries and frame_index - entries[-1].frame_index <= window:
                out.append(tid)
        return out

    def prune(self, frame_index: int, window: int) -> None:
        for tid in list(self.tracks):
            entries = [e for e in self.tracks[tid] if frame_index - e.frame_index <= window]
            if entries:
                self.tracks[tid] = entries
            else:
                del self.tracks[tid]


def cost_matrix(
    candidates: list[InstanceCandidate],
    state: TrackerState,
    config: TrackerConfig,
    track_ids: list[int],
) -> np.ndarray:
    """Euclidean distance between each candidate embedding and each track's
    most recent embedding; class mismatches (and gated distances) are
    forbidden (inf)."""
    n, m = len(candidates), len(track_ids)
    costs = np.full((n, m), FORBIDDEN)
    for i, cand in enumerate(candidates):
        if cand.embedding is None:
            raise InputError("candidate without embedding")
        for j, tid in enumerate(track_ids):
            entry = state.tracks[tid][-1]
            if entry.class_id != cand.class_id:
                continue
            if cand.embedding.shape != entry.embedding.shape:
                raise InputError("embedding dimension mismatch")
            d = float(np.linalg.norm(cand.embedding - entry.embedding))
            if config.max_distance is not None and d > config.max_distance:
                continue
            costs[i, j] = d
    return costs


def hungarian_assign(costs: np.ndarray) -> dict[int, int]:
    """Maximum-cardinality, minimum-total-cost one-to-one assignment over the
    allowed (finite) entries. Returns {row: column}."""
    costs = np.asarray(costs, dtype=float)
    n, m = costs.shape
    if n == 0 or m == 0:
        return {}
    allowed = np.isfinite(costs)
    if not allowed.any():
        return {}
    # big-M padding makes cardinality dominate, then total cost decides
    big = float(costs[allowed].sum()) + 1.0
    padded = np.where(allowed, costs, big)
    rows, cols = linear_sum_assignment(padded)
    return {int(r): int(c) for r, c in zip(rows, cols) if allowed[r, c]}


def associate_frame(
    state: TrackerState,
    candidates: list[InstanceCandidate],
    frame_index: int,
    config: TrackerConfig,
) -> tuple[list[InstanceCandidate], TrackerState]:
    """Assign track ids to confident candidates via assignment against the
    recent-window tracks; unassigned confident candidates open new tracks.
    Low-confidence candidates pass through untracked."""
    if state.last_frame_index is not None and frame_index <= state.last_frame_index:
        raise InputError("frame_index must strictly increase per sequence")

    confident = [(i, c) for i, c in enumerate(candidates) if c.score > config.confidence_threshold]
    active = state.active_tracks(frame_index, config.window)
    assignment: dict[int, int] = {}
    if confident and active:
        costs = cost_matrix([c for _, c in confident], state, config, active)
        assignment = hungarian_assign(costs)

    out = list(candidates)
    for k, (i, cand) in enumerate(confident):
        if k in assignment:
            tid = active[assignment[k]]
        else:
            tid = state.next_id
            state.next_id += 1
            state.tracks[tid] = []
        state.tracks[tid].append(TrackEntry(frame_index, cand.embedding, cand.class_id))
        out[i] = replace(cand, track_id=tid)

    state.prune(frame_index, config.window)
    state.last_frame_index = frame_index
    return out, state


def batch_hard_triplet_loss(
    embeddings: list[tuple[np.ndarray, int, int]], margin: float
) -> float:
    """Mean over anchors of max(hardest-positive - hardest-negative + margin, 0).

    Positives share (class, track) with the anchor (the anchor itself counts,
    at distance 0); negatives share the class but not the track. Anchors
    without a negative contribute a zero hinge.
    """
    if not embeddings:
        raise InputError("empty embedding batch")
    vecs = [np.asarray(v, dtype=np.float64) for v, _, _ in embeddings]
    labels = [(c, t) for _, c, t in embeddings]

    total = 0.0
    for i, (v, (c, t)) in enumerate(zip(vecs, labels)):
        hardest_pos = 0.0
        hardest_neg = None
        for j, (w, (c2, t2)) in enumerate(zip(vecs, labels)):
            if c2 != c:
                continue
            d = float(np.linalg.norm(v - w))
            if t2 == t:
                hardest_pos = max(hardest_pos, d)
            else:
                hardest_neg = d if hardest_neg is None else min(hardest_neg, d)
        if hardest_neg is None:
            continue  # hinge term is 0
        total += max(hardest_pos - hardest_neg + margin, 0.0)
    return total / len(embeddings)
