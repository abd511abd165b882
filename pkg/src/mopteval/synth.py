"""Deterministic synthetic sequences with controllable corruptions.

Objects are axis-aligned rectangles moving in disjoint horizontal bands, so
every IoU in the corruption ledger is a ratio of integer areas and the
expected per-class counts are exact by construction.

Randomness comes from a SplitMix64 generator (update constant
0x9E3779B97F4A7C15, mix constants 0xBF58476D1CE4E5B9 / 0x94D049BB133111EB)
so sequences are reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClassTaxonomy, FrameLabeling, InputError, make_grid_frame
from .fusion import InstanceCandidate, SemanticLogits
from .metrics import ClassStats

LOGIT_MAGNITUDE = 10.0

_MASK64 = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return self.next_u64() / 2.0**64

    def randint(self, lo: int, hi: int) -> int:
        """Inclusive range."""
        return lo + self.next_u64() % (hi - lo + 1)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    frames: int = 5
    width: int = 32
    height: int = 32
    num_objects: int = 2
    num_thing_classes: int = 2
    embedding_dim: int = 32
    embedding_noise: float = 0.0

    def __post_init__(self):
        if self.frames < 1 or self.width < 1 or self.height < 1:
            raise InputError("frames and dimensions must be positive")
        if self.num_objects < 0 or self.num_thing_classes < 1:
            raise InputError("bad object/class counts")
        if self.num_objects and self.height // self.num_objects < 2:
            raise InputError("objects do not fit: need at least 2 rows per object band")
        if self.num_objects and self.width < 4:
            raise InputError("objects do not fit: frame too narrow")
        if self.num_objects > self.embedding_dim:
            raise InputError("need embedding_dim >= num_objects for distinct bases")


@dataclass(frozen=True)
class CorruptionSpec:
    # (frame_index, gt_track, new pred track label): label persists onward
    id_switches: tuple[tuple[int, int, int], ...] = ()
    dropouts: tuple[tuple[int, int], ...] = ()  # (frame_index, gt_track)
    spurious: tuple[tuple[int, int, tuple[int, int, int, int]], ...] = ()  # (frame, class, box)
    erosion: tuple[tuple[int, float], ...] = ()  # (gt_track, fraction in [0, 1))


@dataclass
class RectObject:
    track_id: int
    class_id: int
    width: int
    height: int
    row0: int
    x_start: int
    velocity: int

    def x0(self, k: int, frame_width: int) -> int:
        return int(np.clip(self.x_start + self.velocity * k, 0, frame_width - self.width))

    @property
    def area(self) -> int:
        return self.width * self.height


@dataclass
class SynthSequence:
    taxonomy: ClassTaxonomy
    gt_frames: list[FrameLabeling]
    candidates: list[list[InstanceCandidate]]
    semantic: list[SemanticLogits]
    objects: list[RectObject]
    config: SynthConfig

    @property
    def background_class(self) -> int:
        return 1


def make_taxonomy(num_thing_classes: int) -> ClassTaxonomy:
    """void = 0, background stuff = 1, thing classes 2..2+n-1."""
    return ClassTaxonomy.simple(2, num_thing_classes, void_id=0)


def generate_sequence(config: SynthConfig) -> SynthSequence:
    rng = SplitMix64(config.seed)
    taxonomy = make_taxonomy(config.num_thing_classes)
    thing_ids = taxonomy.thing_ids()
    W, H = config.width, config.height
    bg = 1

    objects: list[RectObject] = []
    if config.num_objects:
        band = H // config.num_objects
        for i in range(config.num_objects):
            oh = rng.randint(1, band)
            ow = rng.randint(2, max(2, W // 2))
            objects.append(
                RectObject(
                    track_id=i + 1,
                    class_id=thing_ids[rng.randint(0, len(thing_ids) - 1)],
                    width=ow,
                    height=oh,
                    row0=i * band,
                    x_start=rng.randint(0, W - ow),
                    velocity=rng.randint(-2, 2),
                )
            )

    bases = {
        obj.track_id: 2.0 * np.eye(config.embedding_dim)[obj.track_id - 1] for obj in objects
    }

    gt_frames: list[FrameLabeling] = []
    candidates: list[list[InstanceCandidate]] = []
    semantic: list[SemanticLogits] = []
    channel_classes = tuple([bg] + thing_ids)

    for k in range(config.frames):
        class_map = np.full((H, W), bg, dtype=np.int64)
        track_map = np.zeros((H, W), dtype=np.int64)
        frame_cands: list[InstanceCandidate] = []
        for obj in objects:
            x0 = obj.x0(k, W)
            class_map[obj.row0 : obj.row0 + obj.height, x0 : x0 + obj.width] = obj.class_id
            track_map[obj.row0 : obj.row0 + obj.height, x0 : x0 + obj.width] = obj.track_id
            noise = np.array(
                [rng.uniform() * 2.0 - 1.0 for _ in range(config.embedding_dim)]
            ) * config.embedding_noise
            frame_cands.append(
                InstanceCandidate(
                    class_id=obj.class_id,
                    score=1.0,
                    box=(float(x0), float(obj.row0), float(x0 + obj.width), float(obj.row0 + obj.height)),
                    mask_logits=np.full((28, 28), LOGIT_MAGNITUDE),
                    embedding=bases[obj.track_id] + noise,
                    track_id=None,
                )
            )
        gt_frames.append(make_grid_frame(class_map, track_map, k))
        logits = np.where(
            class_map[None, :, :] == np.array(channel_classes)[:, None, None],
            LOGIT_MAGNITUDE,
            -LOGIT_MAGNITUDE,
        ).astype(np.float64)
        semantic.append(SemanticLogits(logits, channel_classes))
        candidates.append(frame_cands)

    return SynthSequence(taxonomy, gt_frames, candidates, semantic, objects, config)


def _eroded_width(obj: RectObject, fraction: float) -> int:
    return obj.width - int(round(fraction * obj.width))


def apply_corruptions(
    seq: SynthSequence, spec: CorruptionSpec
) -> tuple[list[FrameLabeling], dict[int, ClassStats]]:
    """Build the corrupted prediction sequence together with an exact per-class
    ledger of expected (TP, FP, FN, IDS, sum IoU, sum sIDS, gt segments),
    derived by integer-area arithmetic rather than by running the engine."""
    config = seq.config
    W, H = config.width, config.height
    bg = seq.background_class
    n_frames = len(seq.gt_frames)
    by_track = {o.track_id: o for o in seq.objects}

    _validate_spec(seq, spec, n_frames, by_track)

    erosion = dict(spec.erosion)
    dropouts = set(spec.dropouts)
    switches_by_track: dict[int, list[tuple[int, int]]] = {}
    for f, t, label in spec.id_switches:
        switches_by_track.setdefault(t, []).append((f, label))
    for t in switches_by_track:
        switches_by_track[t].sort()
    spurious_by_frame: dict[int, list[tuple[int, tuple[int, int, int, int]]]] = {}
    for f, c, box in spec.spurious:
        spurious_by_frame.setdefault(f, []).append((c, box))

    ledger: dict[int, ClassStats] = {}

    def cls(c: int) -> ClassStats:
        return ledger.setdefault(c, ClassStats())

    def pred_label(track: int, k: int) -> int:
        label = track
        for f, new in switches_by_track.get(track, ()):
            if f <= k:
                label = new
        return label

    pred_frames: list[FrameLabeling] = []
    spurious_next = 1_000_000
    last_matched_label: dict[int, int] = {}

    for k in range(n_frames):
        class_map, track_map = seq.gt_frames[k].grid()
        class_map = class_map.copy()
        track_map = track_map.copy()

        bg_area = int(np.count_nonzero(class_map == bg))
        added_to_bg = 0
        removed_from_bg = 0

        for obj in seq.objects:
            x0 = obj.x0(k, W)
            rows = slice(obj.row0, obj.row0 + obj.height)
            if (k, obj.track_id) in dropouts:
                class_map[rows, x0 : x0 + obj.width] = bg
                track_map[rows, x0 : x0 + obj.width] = 0
                added_to_bg += obj.area
                cls(obj.class_id).fn_count += 1
                continue
            new_w = _eroded_width(obj, erosion.get(obj.track_id, 0.0))
            if new_w < obj.width:
                strip = slice(x0 + new_w, x0 + obj.width)
                class_map[rows, strip] = bg
                track_map[rows, strip] = 0
                added_to_bg += (obj.width - new_w) * obj.height
            label = pred_label(obj.track_id, k)
            track_map[rows, x0 : x0 + new_w] = label

            area_pred = new_w * obj.height
            s = cls(obj.class_id)
            if area_pred == 0:
                s.fn_count += 1
                continue
            iou = area_pred / obj.area
            if iou > 0.5:
                s.tp_count += 1
                s.iou_sum += iou
                prev = last_matched_label.get(obj.track_id)
                if prev is not None and prev != label:
                    s.ids_count += 1
                    s.sids_sum += iou
                last_matched_label[obj.track_id] = label
            else:
                s.fp_count += 1
                s.fn_count += 1

        for c, (x0, y0, x1, y1) in spurious_by_frame.get(k, ()):
            class_map[y0:y1, x0:x1] = c
            track_map[y0:y1, x0:x1] = spurious_next
            spurious_next += 1
            removed_from_bg += (x1 - x0) * (y1 - y0)
            cls(c).fp_count += 1

        if bg_area:
            s = cls(bg)
            inter = bg_area - removed_from_bg
            union = bg_area + added_to_bg
            iou = inter / union
            if iou > 0.5:
                s.tp_count += 1
                s.iou_sum += iou
            else:
                s.fp_count += 1
                s.fn_count += 1

        for obj in seq.objects:
            cls(obj.class_id).gt_segment_count += 1

        pred_frames.append(make_grid_frame(class_map, track_map, k))

    return pred_frames, ledger


def _validate_spec(seq, spec, n_frames, by_track):
    gt_tracks = set(by_track)
    for f, t, label in spec.id_switches:
        if not (0 <= f < n_frames) or t not in gt_tracks:
            raise InputError(f"switch references unknown frame/track ({f}, {t})")
        if label in gt_tracks or label < 1:
            raise InputError(f"switch label {label} collides with a groundtruth track")
    labels = [label for _, _, label in spec.id_switches]
    if len(labels) != len(set(labels)):
        raise InputError("switch labels must be distinct")
    for f, t in spec.dropouts:
        if not (0 <= f < n_frames) or t not in gt_tracks:
            raise InputError(f"dropout references unknown frame/track ({f}, {t})")
        if any(sf == f and st == t for sf, st, _ in spec.id_switches):
            raise InputError(f"conflicting dropout and switch on track {t} frame {f}")
        if any(t == et for et, _ in spec.erosion):
            raise InputError(f"conflicting dropout and erosion on track {t}")
    for t, e in spec.erosion:
        if t not in gt_tracks or not (0.0 <= e < 1.0):
            raise InputError(f"bad erosion entry ({t}, {e})")
    seen_tracks = [t for t, _ in spec.erosion]
    if len(seen_tracks) != len(set(seen_tracks)):
        raise InputError("duplicate erosion entries for one track")
    for f, c, (x0, y0, x1, y1) in spec.spurious:
        if not (0 <= f < n_frames):
            raise InputError(f"spurious references unknown frame {f}")
        if not (0 <= x0 < x1 <= seq.config.width and 0 <= y0 < y1 <= seq.config.height):
            raise InputError(f"spurious box {x0, y0, x1, y1} outside frame")
        class_map, _ = seq.gt_frames[f].grid()
        if not (class_map[y0:y1, x0:x1] == seq.background_class).all():
            raise InputError("spurious box must lie on background")
    # spurious boxes within one frame must not overlap each other
    per_frame: dict[int, list[tuple[int, int, int, int]]] = {}
    for f, _, box in spec.spurious:
        per_frame.setdefault(f, []).append(box)
    for boxes in per_frame.values():
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                a, b = boxes[i], boxes[j]
                if a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]:
                    raise InputError("overlapping spurious boxes in one frame")
