"""Panoptic fusion: merges ranked instance candidates with semantic logits
into one labeled frame with tracked instance ids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ClassTaxonomy,
    FrameLabeling,
    GridShape,
    InputError,
    NO_TRACK,
    make_grid_frame,
)

DEFAULT_PATCH = 28


@dataclass(frozen=True)
class SemanticLogits:
    """Per-class logit planes of shape (M, H, W)."""

    values: np.ndarray
    channel_classes: tuple[int, ...]  # channel index -> class_id

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[0] != len(self.channel_classes):
            raise InputError("semantic logits must be (M, H, W) with one class per channel")
        if not np.isfinite(v).all():
            raise InputError("semantic logits must be finite")
        object.__setattr__(self, "values", v)

    def channel_for(self, class_id: int) -> np.ndarray:
        try:
            idx = self.channel_classes.index(class_id)
        except ValueError:
            raise InputError(f"no semantic channel for class {class_id}") from None
        return self.values[idx]


@dataclass(frozen=True)
class InstanceCandidate:
    class_id: int
    score: float
    box: tuple[float, float, float, float]  # x0, y0, x1, y1 in element coords
    mask_logits: np.ndarray  # (P, P) patch aligned to box
    embedding: np.ndarray | None = None
    track_id: int | None = None

    def __post_init__(self):
        x0, y0, x1, y1 = self.box
        if not (x0 < x1 and y0 < y1):
            raise InputError(f"degenerate box {self.box}")
        if not np.isfinite(self.score):
            raise InputError("non-finite score")
        m = np.asarray(self.mask_logits, dtype=np.float64)
        if not np.isfinite(m).all():
            raise InputError("non-finite mask logits")
        object.__setattr__(self, "mask_logits", m)
        if self.embedding is not None:
            object.__setattr__(self, "embedding", np.asarray(self.embedding, dtype=np.float64))

    @property
    def box_area(self) -> float:
        x0, y0, x1, y1 = self.box
        return (x1 - x0) * (y1 - y0)


@dataclass(frozen=True)
class FusionConfig:
    confidence_threshold: float = 0.5  # u_p
    min_stuff_area: int = 375  # u_a
    # patch upsampling is bilinear, corner-aligned; no alternatives provided

    def __post_init__(self):
        if not (0.0 <= self.confidence_threshold <= 1.0):
            raise InputError("confidence threshold must be in [0, 1]")
        if self.min_stuff_area < 0:
            raise InputError("minimum stuff area must be >= 0")


@dataclass
class LogitMap:
    """Full-resolution logits with an explicit validity mask (no numeric
    sentinel in the stored values)."""

    values: np.ndarray  # (H, W) float, meaningful only where valid
    valid: np.ndarray  # (H, W) bool


def filter_and_rank(
    candidates: list[InstanceCandidate], config: FusionConfig
) -> list[InstanceCandidate]:
    """Keep candidates scoring strictly above the threshold, ordered by
    descending score, then larger box area, then input order."""
    kept = [(i, c) for i, c in enumerate(candidates) if c.score > config.confidence_threshold]
    kept.sort(key=lambda ic: (-ic[1].score, -ic[1].box_area, ic[0]))
    return [c for _, c in kept]


def bilinear_upsample(patch: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resize of a 2-D patch."""
    ph, pw = patch.shape
    ys = np.linspace(0.0, ph - 1, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, pw - 1, out_w) if out_w > 1 else np.zeros(1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, ph - 1)
    x1 = np.minimum(x0 + 1, pw - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    a = patch[np.ix_(y0, x0)]
    b = patch[np.ix_(y0, x1)]
    c = patch[np.ix_(y1, x0)]
    d = patch[np.ix_(y1, x1)]
    return a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx + c * fy * (1 - fx) + d * fy * fx


def _paste_candidate(cand: InstanceCandidate, shape: GridShape) -> LogitMap | None:
    """Upsample the candidate patch into its (clipped) box; None if the box
    clips to nothing."""
    H, W = shape.height, shape.width
    x0, y0, x1, y1 = cand.box
    bx0, by0 = int(np.floor(x0)), int(np.floor(y0))
    bx1, by1 = int(np.ceil(x1)), int(np.ceil(y1))
    bw, bh = bx1 - bx0, by1 - by0
    cx0, cy0 = max(bx0, 0), max(by0, 0)
    cx1, cy1 = min(bx1, W), min(by1, H)
    if cx0 >= cx1 or cy0 >= cy1:
        return None
    up = bilinear_upsample(cand.mask_logits, bh, bw)
    crop = up[cy0 - by0 : cy1 - by0, cx0 - bx0 : cx1 - bx0]
    values = np.zeros((H, W), dtype=np.float64)
    valid = np.zeros((H, W), dtype=bool)
    values[cy0:cy1, cx0:cx1] = crop
    valid[cy0:cy1, cx0:cx1] = True
    return LogitMap(values, valid)


def resolve_overlaps(
    ranked: list[InstanceCandidate], shape: GridShape
) -> tuple[list[InstanceCandidate], list[LogitMap]]:
    """Build full-resolution instance logit maps; elements claimed by a
    higher-ranked candidate (upsampled logit > 0) are removed from all
    lower-ranked maps, so claim regions are pairwise disjoint."""
    kept: list[InstanceCandidate] = []
    maps: list[LogitMap] = []
    claimed = np.zeros((shape.height, shape.width), dtype=bool)
    for cand in ranked:
        m = _paste_candidate(cand, shape)
        if m is None:
            continue
        m.valid &= ~claimed
        claim = m.valid & (m.values > 0)
        claimed |= claim
        kept.append(cand)
        maps.append(m)
    return kept, maps


def semantic_counterpart(
    semantic: SemanticLogits, cand: InstanceCandidate, shape: GridShape
) -> LogitMap:
    """The semantic channel of the candidate's class, valid only inside its box."""
    chan = semantic.channel_for(cand.class_id)
    H, W = shape.height, shape.width
    x0, y0, x1, y1 = cand.box
    cx0, cy0 = max(int(np.floor(x0)), 0), max(int(np.floor(y0)), 0)
    cx1, cy1 = min(int(np.ceil(x1)), W), min(int(np.ceil(y1)), H)
    valid = np.zeros((H, W), dtype=bool)
    valid[cy0:cy1, cx0:cx1] = True
    return LogitMap(chan.copy(), valid)


def fuse_logits(b_d, b_s):
    """(sigmoid(b_d) + sigmoid(b_s)) * (b_d + b_s), element-wise."""
    b_d = np.asarray(b_d, dtype=np.float64)
    b_s = np.asarray(b_s, dtype=np.float64)
    sig = 1.0 / (1.0 + np.exp(-b_d)) + 1.0 / (1.0 + np.exp(-b_s))
    return sig * (b_d + b_s)


def fuse_maps(b_d: LogitMap, b_s: LogitMap) -> LogitMap:
    valid = b_d.valid & b_s.valid
    values = np.zeros_like(b_d.values)
    values[valid] = fuse_logits(b_d.values[valid], b_s.values[valid])
    return LogitMap(values, valid)


def assemble_panoptic(
    candidates: list[InstanceCandidate],
    fused_maps: list[LogitMap],
    stuff_classes: list[int],
    stuff_logits: list[np.ndarray],
    config: FusionConfig,
    void_id: int,
    shape: GridShape,
    frame_index: int = 0,
) -> FrameLabeling:
    """Element-wise argmax over [candidate channels || stuff channels]; invalid
    entries lose every comparison, ties go to the lowest channel index (so
    instances beat stuff). Stuff regions at or below the minimum area become
    void."""
    n_cand = len(fused_maps)
    n_stuff = len(stuff_classes)
    if n_cand + n_stuff == 0:
        raise InputError("no channels to assemble")
    H, W = shape.height, shape.width

    stack = np.full((n_cand + n_stuff, H, W), -np.inf)
    for i, m in enumerate(fused_maps):
        stack[i][m.valid] = m.values[m.valid]
    for j, plane in enumerate(stuff_logits):
        stack[n_cand + j] = plane

    winner = np.argmax(stack, axis=0)
    any_valid = np.isfinite(stack.max(axis=0))

    class_map = np.full((H, W), void_id, dtype=np.int64)
    track_map = np.zeros((H, W), dtype=np.int64)

    for i, cand in enumerate(candidates):
        sel = any_valid & (winner == i)
        if cand.track_id is None or cand.track_id < 1:
            raise InputError("candidate reaching assembly must carry a track id")
        class_map[sel] = cand.class_id
        track_map[sel] = cand.track_id

    for j, c in enumerate(stuff_classes):
        sel = any_valid & (winner == n_cand + j)
        if int(sel.sum()) > config.min_stuff_area:
            class_map[sel] = c
            track_map[sel] = NO_TRACK
        # else: remains void

    return make_grid_frame(class_map, track_map, frame_index)


def fuse_frame(
    semantic: SemanticLogits,
    candidates: list[InstanceCandidate],
    taxonomy: ClassTaxonomy,
    config: FusionConfig,
    shape: GridShape,
    frame_index: int = 0,
) -> FrameLabeling:
    """Full fusion pass for one frame. Candidates must carry track ids."""
    ranked = filter_and_rank(candidates, config)
    kept, instance_maps = resolve_overlaps(ranked, shape)
    fused = [
        fuse_maps(b_d, semantic_counterpart(semantic, cand, shape))
        for cand, b_d in zip(kept, instance_maps)
    ]
    stuff_classes = [
        c for c in semantic.channel_classes
        if not taxonomy.is_thing(c) and c != taxonomy.void_id
    ]
    stuff_logits = [semantic.channel_for(c) for c in stuff_classes]
    return assemble_panoptic(
        kept, fused, stuff_classes, stuff_logits, config, taxonomy.void_id, shape, frame_index
    )
