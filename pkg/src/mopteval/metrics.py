"""Sequence-level panoptic tracking metrics: sPTQ, PTQ, PQ, SQ, RQ and the
MOTS companions (sMOTSA, MOTSA, MOTSP).

Pipeline: overlap_table -> match_frame (pure, per frame) -> the ordered
update_track_consistency fold -> accumulate -> finalize_report.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._kernels import pair_counts
from .core import (
    ClassTaxonomy,
    FrameLabeling,
    InputError,
    NO_TRACK,
    decode_identity,
    encode_identity,
    frames_compatible,
    require_valid,
)

Key = tuple[int, int]  # (class_id, track_id)

IOU_THRESHOLD = 0.5  # strict: TP requires IoU strictly above this
VOID_DISCARD_FRACTION = 0.5  # pred segments mostly over GT void are dropped


@dataclass
class OverlapTable:
    """Sparse co-occurrence counts between pred and gt segments of one frame,
    plus per-segment areas and per-pred-segment overlap with the GT void region."""

    intersections: dict[tuple[Key, Key], int]
    pred_areas: dict[Key, int]
    gt_areas: dict[Key, int]
    void_overlap: dict[Key, int]
    # gt keys intersecting each pred key, for matching scans
    gt_partners: dict[Key, list[Key]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.gt_partners:
            for (p, g) in self.intersections:
                self.gt_partners.setdefault(p, []).append(g)


@dataclass
class FrameMatching:
    """Per-class TP pairs (with IoU), FP pred keys and FN gt keys for one frame."""

    tp_pairs: dict[int, list[tuple[Key, Key, float]]]
    fp_keys: dict[int, list[Key]]
    fn_keys: dict[int, list[Key]]
    frame_index: int
    gt_thing_segments: dict[int, int]  # per thing class, gt segment count


@dataclass
class TrackContinuity:
    """Most recent matched pred track per gt track, with the frame of that match."""

    last_match: dict[int, tuple[int, int]] = field(default_factory=dict)
    last_frame_index: int | None = None


@dataclass
class ClassStats:
    tp_count: int = 0
    iou_sum: float = 0.0
    fp_count: int = 0
    fn_count: int = 0
    ids_count: int = 0
    sids_sum: float = 0.0
    gt_segment_count: int = 0


@dataclass
class SegmentStats:
    per_class: dict[int, ClassStats] = field(default_factory=dict)

    def cls(self, c: int) -> ClassStats:
        return self.per_class.setdefault(c, ClassStats())


@dataclass
class ClassMetrics:
    sptq: float
    ptq: float
    pq: float
    sq: float
    rq: float
    stats: ClassStats


@dataclass
class MetricReport:
    per_class: dict[int, ClassMetrics]
    sptq: float
    ptq: float
    pq: float
    sq: float
    rq: float
    smotsa: float
    motsa: float
    motsp: float


def overlap_table(pred: FrameLabeling, gt: FrameLabeling) -> OverlapTable:
    """Single pass over elements; exact co-occurrence counts for all
    (pred identity, gt identity) pairs, void region included."""
    if not frames_compatible(pred, gt):
        raise InputError("pred/gt frame shape mismatch")
    p_codes = encode_identity(pred.class_ids, pred.track_ids)
    g_codes = encode_identity(gt.class_ids, gt.track_ids)
    p_keys, p_inv, p_counts = np.unique(p_codes, return_inverse=True, return_counts=True)
    g_keys, g_inv, g_counts = np.unique(g_codes, return_inverse=True, return_counts=True)
    n_p, n_g = p_keys.size, g_keys.size

    counts = pair_counts(p_inv, g_inv, n_p, n_g).reshape(n_p, n_g)

    p_decoded = [decode_identity(int(c)) for c in p_keys]
    g_decoded = [decode_identity(int(c)) for c in g_keys]
    inter: dict[tuple[Key, Key], int] = {}
    pi, gi = np.nonzero(counts)
    for i, j in zip(pi.tolist(), gi.tolist()):
        inter[(p_decoded[i], g_decoded[j])] = int(counts[i, j])

    return OverlapTable(
        intersections=inter,
        pred_areas={k: int(a) for k, a in zip(p_decoded, p_counts.tolist())},
        gt_areas={k: int(a) for k, a in zip(g_decoded, g_counts.tolist())},
        void_overlap={},  # filled below per taxonomy-free convention in iou()
    )


def attach_void(table: OverlapTable, void_id: int) -> OverlapTable:
    """Populate per-pred void overlaps from the gt void segment, if any."""
    table.void_overlap = {}
    for (p, g), n in table.intersections.items():
        if g[0] == void_id:
            table.void_overlap[p] = table.void_overlap.get(p, 0) + n
    return table


def iou(pred_key: Key, gt_key: Key, table: OverlapTable) -> float:
    """IoU after removing GT-void elements from the predicted segment."""
    if pred_key not in table.pred_areas or gt_key not in table.gt_areas:
        raise InputError(f"unknown segment key {pred_key} / {gt_key}")
    inter = table.intersections.get((pred_key, gt_key), 0)
    p_eff = table.pred_areas[pred_key] - table.void_overlap.get(pred_key, 0)
    union = p_eff + table.gt_areas[gt_key] - inter
    if union <= 0:
        return 0.0
    return inter / union


def match_frame(pred: FrameLabeling, gt: FrameLabeling, taxonomy: ClassTaxonomy) -> FrameMatching:
    """Class-gated unique matching at IoU > 0.5 (strict); unmatched predictions
    become FP, unmatched groundtruth become FN."""
    require_valid(pred, taxonomy)
    require_valid(gt, taxonomy)
    table = attach_void(overlap_table(pred, gt), taxonomy.void_id)
    return match_from_table(table, taxonomy, pred.frame_index)


def match_from_table(table: OverlapTable, taxonomy: ClassTaxonomy, frame_index: int) -> FrameMatching:
    void = taxonomy.void_id
    tp_pairs: dict[int, list[tuple[Key, Key, float]]] = {}
    fp_keys: dict[int, list[Key]] = {}
    fn_keys: dict[int, list[Key]] = {}
    matched_gt: set[Key] = set()

    for p in sorted(table.pred_areas):
        c = p[0]
        if c == void:
            continue
        area = table.pred_areas[p]
        v = table.void_overlap.get(p, 0)
        if v / area > VOID_DISCARD_FRACTION:
            continue  # mostly over GT void: discarded, not an FP
        if area - v == 0:
            continue  # nothing left after void removal
        best = None
        hits = 0
        for g in table.gt_partners.get(p, ()):  # candidates share >=1 element
            if g[0] != c or g[0] == void:
                continue
            val = iou(p, g, table)
            if val > IOU_THRESHOLD:
                hits += 1
                best = (g, val)
        if __debug__ and hits > 1:
            raise AssertionError(f"unique-matching violated for pred {p}")
        if best is not None:
            g, val = best
            tp_pairs.setdefault(c, []).append((p, g, val))
            matched_gt.add(g)
        else:
            fp_keys.setdefault(c, []).append(p)

    gt_thing = {}
    for g in sorted(table.gt_areas):
        c = g[0]
        if c == void:
            continue
        if taxonomy.is_thing(c):
            gt_thing[c] = gt_thing.get(c, 0) + 1
        if g not in matched_gt:
            fn_keys.setdefault(c, []).append(g)

    if __debug__:
        # a gt segment may be matched by at most one pred (theorem check)
        seen = [g for pairs in tp_pairs.values() for (_, g, _) in pairs]
        assert len(seen) == len(set(seen))

    return FrameMatching(tp_pairs, fp_keys, fn_keys, frame_index, gt_thing)


def update_track_consistency(
    matching: FrameMatching, continuity: TrackContinuity, frame_index: int
) -> tuple[list[tuple[int, float]], TrackContinuity]:
    """Emit one identity-switch event (class, iou) for each thing TP whose gt
    track was most recently matched to a different pred track; update the
    continuity map for every thing TP."""
    if continuity.last_frame_index is not None and frame_index <= continuity.last_frame_index:
        raise InputError("frames must be processed in strictly increasing order")
    events: list[tuple[int, float]] = []
    for c, pairs in matching.tp_pairs.items():
        for p, g, val in pairs:
            gt_track = g[1]
            if gt_track == NO_TRACK:
                continue  # stuff never switches
            pred_track = p[1]
            prev = continuity.last_match.get(gt_track)
            if prev is not None and prev[0] != pred_track:
                events.append((c, val))
            continuity.last_match[gt_track] = (pred_track, frame_index)
    continuity.last_frame_index = frame_index
    return events, continuity


def accumulate(
    stats: SegmentStats, matching: FrameMatching, ids_events: list[tuple[int, float]]
) -> SegmentStats:
    for c, pairs in matching.tp_pairs.items():
        s = stats.cls(c)
        s.tp_count += len(pairs)
        s.iou_sum += sum(v for _, _, v in pairs)
    for c, keys in matching.fp_keys.items():
        stats.cls(c).fp_count += len(keys)
    for c, keys in matching.fn_keys.items():
        stats.cls(c).fn_count += len(keys)
    for c, n in matching.gt_thing_segments.items():
        stats.cls(c).gt_segment_count += n
    for c, val in ids_events:
        s = stats.cls(c)
        s.ids_count += 1
        s.sids_sum += val
    return stats


def finalize_report(stats: SegmentStats, taxonomy: ClassTaxonomy) -> MetricReport:
    """Per-class scores with denominator tp + fp/2 + fn/2; classes never seen on
    either side are excluded from the averages. MOTS companions pool thing
    classes only."""
    per_class: dict[int, ClassMetrics] = {}
    for c in sorted(stats.per_class):
        s = stats.per_class[c]
        denom = s.tp_count + 0.5 * s.fp_count + 0.5 * s.fn_count
        if denom == 0:
            continue
        sq = s.iou_sum / s.tp_count if s.tp_count else 0.0
        per_class[c] = ClassMetrics(
            sptq=(s.iou_sum - s.sids_sum) / denom,
            ptq=(s.iou_sum - s.ids_count) / denom,
            pq=s.iou_sum / denom,
            sq=sq,
            rq=s.tp_count / denom,
            stats=s,
        )

    def avg(vals):
        return sum(vals) / len(vals) if vals else 0.0

    sptq = avg([m.sptq for m in per_class.values()])
    ptq = avg([m.ptq for m in per_class.values()])
    pq = avg([m.pq for m in per_class.values()])
    sq = avg([m.sq for m in per_class.values()])
    rq = avg([m.rq for m in per_class.values()])

    tp = iou_sum = fp = ids = gt_total = 0.0
    for c in taxonomy.thing_ids():
        s = stats.per_class.get(c)
        if s is None:
            continue
        tp += s.tp_count
        iou_sum += s.iou_sum
        fp += s.fp_count
        ids += s.ids_count
        gt_total += s.gt_segment_count
    motsa = (tp - fp - ids) / gt_total if gt_total else 0.0
    smotsa = (iou_sum - fp - ids) / gt_total if gt_total else 0.0
    motsp = iou_sum / tp if tp else 0.0

    return MetricReport(per_class, sptq, ptq, pq, sq, rq, smotsa, motsa, motsp)


def evaluate_sequence(
    pred_frames: list[FrameLabeling],
    gt_frames: list[FrameLabeling],
    taxonomy: ClassTaxonomy,
) -> MetricReport:
    """End-to-end sequence evaluation: parallelizable match phase, then the
    ordered continuity fold. MOPT_THREADS caps the match phase (0 = auto)."""
    if len(pred_frames) != len(gt_frames):
        raise InputError("pred/gt sequence length mismatch")

    threads = int(os.environ.get("MOPT_THREADS", "0") or 0)
    if threads == 0:
        threads = 1  # auto: per-frame numpy work rarely benefits from threads

    if threads > 1 and len(pred_frames) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            matchings = list(
                ex.map(lambda pg: match_frame(pg[0], pg[1], taxonomy), zip(pred_frames, gt_frames))
            )
    else:
        matchings = [match_frame(p, g, taxonomy) for p, g in zip(pred_frames, gt_frames)]

    stats = SegmentStats()
    continuity = TrackContinuity()
    for idx, matching in enumerate(matchings):
        events, continuity = update_track_consistency(matching, continuity, idx)
        accumulate(stats, matching, events)
    return finalize_report(stats, taxonomy)
