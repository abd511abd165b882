"""Brute-force reference implementations, for tests and debug verification only.

These deliberately share no code with the fast engine: overlaps are recounted
per segment pair, matching is re-derived from the set definitions, and
assignment is solved by exhaustive enumeration.
"""

from __future__ import annotations

import numpy as np

from .core import ClassTaxonomy, FrameLabeling, InputError, NO_TRACK
from .metrics import ClassMetrics, ClassStats, MetricReport, OverlapTable

Key = tuple[int, int]


def _segment_masks(frame: FrameLabeling) -> dict[Key, np.ndarray]:
    masks: dict[Key, np.ndarray] = {}
    for i in range(frame.count):
        key = (int(frame.class_ids[i]), int(frame.track_ids[i]))
        masks.setdefault(key, np.zeros(frame.count, dtype=bool))[i] = True
    return masks


def naive_overlap(pred: FrameLabeling, gt: FrameLabeling) -> OverlapTable:
    """Per (pred segment, gt segment) pair, count shared elements directly."""
    if pred.shape != gt.shape or pred.count != gt.count:
        raise InputError("pred/gt frame shape mismatch")
    p_masks = _segment_masks(pred)
    g_masks = _segment_masks(gt)
    inter: dict[tuple[Key, Key], int] = {}
    for pk, pm in p_masks.items():
        for gk, gm in g_masks.items():
            n = int(np.count_nonzero(pm & gm))
            if n:
                inter[(pk, gk)] = n
    return OverlapTable(
        intersections=inter,
        pred_areas={k: int(m.sum()) for k, m in p_masks.items()},
        gt_areas={k: int(m.sum()) for k, m in g_masks.items()},
        void_overlap={},
    )


def _naive_iou(pm: np.ndarray, gm: np.ndarray, gt_void: np.ndarray) -> float:
    pm = pm & ~gt_void
    inter = int(np.count_nonzero(pm & gm))
    union = int(np.count_nonzero(pm | gm))
    return inter / union if union else 0.0


def _naive_match(pred: FrameLabeling, gt: FrameLabeling, taxonomy: ClassTaxonomy):
    """Returns (tp pairs per class, fp per class, fn per class, gt thing counts)."""
    void = taxonomy.void_id
    p_masks = _segment_masks(pred)
    g_masks = _segment_masks(gt)
    gt_void = gt.class_ids == void

    tp: dict[int, list[tuple[Key, Key, float]]] = {}
    fp: dict[int, list[Key]] = {}
    matched: set[Key] = set()
    for pk in sorted(p_masks):
        if pk[0] == void:
            continue
        pm = p_masks[pk]
        area = int(pm.sum())
        void_area = int(np.count_nonzero(pm & gt_void))
        if void_area * 2 > area:
            continue
        if area == void_area:
            continue
        found = None
        for gk in sorted(g_masks):
            if gk[0] != pk[0] or gk[0] == void:
                continue
            v = _naive_iou(pm, g_masks[gk], gt_void)
            if v > 0.5:
                found = (gk, v)
        if found:
            tp.setdefault(pk[0], []).append((pk, found[0], found[1]))
            matched.add(found[0])
        else:
            fp.setdefault(pk[0], []).append(pk)

    fn: dict[int, list[Key]] = {}
    gt_things: dict[int, int] = {}
    for gk in sorted(g_masks):
        if gk[0] == void:
            continue
        if taxonomy.is_thing(gk[0]):
            gt_things[gk[0]] = gt_things.get(gk[0], 0) + 1
        if gk not in matched:
            fn.setdefault(gk[0], []).append(gk)
    return tp, fp, fn, gt_things


def naive_evaluate(
    pred_frames: list[FrameLabeling],
    gt_frames: list[FrameLabeling],
    taxonomy: ClassTaxonomy,
) -> MetricReport:
    """Recompute every IoU from scratch per frame and apply the metric
    definitions directly."""
    if len(pred_frames) != len(gt_frames):
        raise InputError("sequence length mismatch")

    per: dict[int, ClassStats] = {}

    def cls(c: int) -> ClassStats:
        return per.setdefault(c, ClassStats())

    last_pred_track: dict[int, int] = {}
    for pred, gt in zip(pred_frames, gt_frames):
        tp, fp, fn, gt_things = _naive_match(pred, gt, taxonomy)
        pending: dict[int, int] = {}
        for c, pairs in tp.items():
            s = cls(c)
            for pk, gk, v in pairs:
                s.tp_count += 1
                s.iou_sum += v
                if gk[1] != NO_TRACK:
                    prev = last_pred_track.get(gk[1])
                    if prev is not None and prev != pk[1]:
                        s.ids_count += 1
                        s.sids_sum += v
                    pending[gk[1]] = pk[1]
        last_pred_track.update(pending)
        for c, keys in fp.items():
            cls(c).fp_count += len(keys)
        for c, keys in fn.items():
            cls(c).fn_count += len(keys)
        for c, n in gt_things.items():
            cls(c).gt_segment_count += n

    per_class: dict[int, ClassMetrics] = {}
    for c in sorted(per):
        s = per[c]
        d = s.tp_count + 0.5 * s.fp_count + 0.5 * s.fn_count
        if d == 0:
            continue
        per_class[c] = ClassMetrics(
            sptq=(s.iou_sum - s.sids_sum) / d,
            ptq=(s.iou_sum - s.ids_count) / d,
            pq=s.iou_sum / d,
            sq=s.iou_sum / s.tp_count if s.tp_count else 0.0,
            rq=s.tp_count / d,
            stats=s,
        )

    vals = list(per_class.values())
    n = len(vals)
    tp = sum(per[c].tp_count for c in per if taxonomy.is_thing(c))
    iou_sum = sum(per[c].iou_sum for c in per if taxonomy.is_thing(c))
    fpn = sum(per[c].fp_count for c in per if taxonomy.is_thing(c))
    ids = sum(per[c].ids_count for c in per if taxonomy.is_thing(c))
    gt_total = sum(per[c].gt_segment_count for c in per if taxonomy.is_thing(c))
    return MetricReport(
        per_class,
        sptq=sum(m.sptq for m in vals) / n if n else 0.0,
        ptq=sum(m.ptq for m in vals) / n if n else 0.0,
        pq=sum(m.pq for m in vals) / n if n else 0.0,
        sq=sum(m.sq for m in vals) / n if n else 0.0,
        rq=sum(m.rq for m in vals) / n if n else 0.0,
        smotsa=(iou_sum - fpn - ids) / gt_total if gt_total else 0.0,
        motsa=(tp - fpn - ids) / gt_total if gt_total else 0.0,
        motsp=iou_sum / tp if tp else 0.0,
    )


def check_unique_matching(pred: FrameLabeling, gt: FrameLabeling, void_id: int = -1) -> bool:
    """True iff every gt segment has at most one pred segment with IoU > 0.5.

    Plain-dict element counting so the check stays independent of the engine's
    overlap pass."""
    inter: dict[tuple[Key, Key], int] = {}
    p_area: dict[Key, int] = {}
    g_area: dict[Key, int] = {}
    p_void: dict[Key, int] = {}
    for i in range(pred.count):
        pk = (int(pred.class_ids[i]), int(pred.track_ids[i]))
        gk = (int(gt.class_ids[i]), int(gt.track_ids[i]))
        p_area[pk] = p_area.get(pk, 0) + 1
        g_area[gk] = g_area.get(gk, 0) + 1
        if gk[0] == void_id:
            p_void[pk] = p_void.get(pk, 0) + 1
        else:
            inter[(pk, gk)] = inter.get((pk, gk), 0) + 1

    hits: dict[Key, int] = {}
    for (pk, gk), n in inter.items():
        p_eff = p_area[pk] - p_void.get(pk, 0)
        union = p_eff + g_area[gk] - n
        if union > 0 and n / union > 0.5:
            hits[gk] = hits.get(gk, 0) + 1
    return all(h <= 1 for h in hits.values())


def exhaustive_assignment(cost: np.ndarray, allowed: np.ndarray | None = None) -> tuple[float, int]:
    """Minimum total cost over all partial injective row->column assignments,
    preferring maximum cardinality. Returns (cost, cardinality). Rows/cols
    capped at 6."""
    cost = np.asarray(cost, dtype=float)
    if allowed is None:
        allowed = np.isfinite(cost)
    n, m = cost.shape
    if max(n, m) > 6:
        raise InputError("exhaustive assignment capped at 6x6")

    best_card, best_cost = -1, float("inf")

    cols = list(range(m))

    def rec(row: int, used: set[int], card: int, total: float):
        nonlocal best_card, best_cost
        if row == n:
            if card > best_card or (card == best_card and total < best_cost):
                best_card, best_cost = card, total
            return
        rec(row + 1, used, card, total)  # leave row unassigned
        for j in cols:
            if j not in used and allowed[row, j]:
                used.add(j)
                rec(row + 1, used, card + 1, total + cost[row, j])
                used.remove(j)

    rec(0, set(), 0, 0.0)
    return best_cost if best_card > 0 else 0.0, max(best_card, 0)
