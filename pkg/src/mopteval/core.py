"""Shared domain types: taxonomy, frame labelings, and segments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

STUFF = "stuff"
THING = "thing"

# Reserved "no instance" track id for stuff and void elements.
NO_TRACK = 0


class InputError(ValueError):
    """Rejected input: malformed frame, shape mismatch, unknown key, etc."""


@dataclass(frozen=True)
class ClassEntry:
    class_id: int
    name: str
    kind: str  # "stuff" or "thing"


@dataclass(frozen=True)
class ClassTaxonomy:
    entries: tuple[ClassEntry, ...]
    void_id: int

    def __post_init__(self):
        ids = [e.class_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise InputError("duplicate class ids in taxonomy")
        for e in self.entries:
            if e.kind not in (STUFF, THING):
                raise InputError(f"unknown kind {e.kind!r} for class {e.class_id}")
            if not (0 <= e.class_id <= 65534):
                raise InputError(f"class id {e.class_id} out of range")
        by_id = {e.class_id: e for e in self.entries}
        if self.void_id not in by_id:
            raise InputError("void_id missing from taxonomy entries")
        if by_id[self.void_id].kind != STUFF:
            raise InputError("void class must have kind stuff")
        if not any(e.kind == THING for e in self.entries):
            raise InputError("taxonomy needs at least one thing class")
        if not any(e.kind == STUFF and e.class_id != self.void_id for e in self.entries):
            raise InputError("taxonomy needs at least one non-void stuff class")

    @property
    def by_id(self) -> dict[int, ClassEntry]:
        return {e.class_id: e for e in self.entries}

    def kind_of(self, class_id: int) -> str:
        return self.by_id[class_id].kind

    def is_thing(self, class_id: int) -> bool:
        return self.by_id[class_id].kind == THING

    def thing_ids(self) -> list[int]:
        return [e.class_id for e in self.entries if e.kind == THING]

    def stuff_ids(self, include_void: bool = True) -> list[int]:
        out = [e.class_id for e in self.entries if e.kind == STUFF]
        if not include_void:
            out = [c for c in out if c != self.void_id]
        return out

    @staticmethod
    def simple(num_stuff: int, num_thing: int, void_id: int | None = None) -> "ClassTaxonomy":
        """Convenience taxonomy: stuff ids 0..num_stuff-1 (0 = void by default),
        thing ids num_stuff..num_stuff+num_thing-1."""
        entries = []
        for c in range(num_stuff):
            entries.append(ClassEntry(c, f"stuff_{c}", STUFF))
        for c in range(num_stuff, num_stuff + num_thing):
            entries.append(ClassEntry(c, f"thing_{c}", THING))
        return ClassTaxonomy(tuple(entries), void_id if void_id is not None else 0)


@dataclass(frozen=True)
class GridShape:
    width: int
    height: int

    @property
    def count(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class PointsShape:
    count: int


Shape = GridShape | PointsShape


@dataclass(frozen=True)
class FrameLabeling:
    """Per-element (class_id, track_id) assignment for one frame.

    Elements are flat; a GridShape frame is stored row-major.
    Stuff elements (void included) carry track_id 0, thing elements >= 1.
    """

    class_ids: np.ndarray  # int array, shape (n,)
    track_ids: np.ndarray  # int array, shape (n,)
    shape: Shape
    frame_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "class_ids", np.asarray(self.class_ids, dtype=np.int64))
        object.__setattr__(self, "track_ids", np.asarray(self.track_ids, dtype=np.int64))
        self.class_ids.setflags(write=False)
        self.track_ids.setflags(write=False)

    @property
    def count(self) -> int:
        return int(self.class_ids.shape[0])

    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (class map, track map) as (H, W) views; grid frames only."""
        if not isinstance(self.shape, GridShape):
            raise InputError("not a grid frame")
        h, w = self.shape.height, self.shape.width
        return self.class_ids.reshape(h, w), self.track_ids.reshape(h, w)


@dataclass(frozen=True)
class Segment:
    """All elements of one frame sharing (class_id, track_id); identity, not
    spatial connectivity, defines segments."""

    class_id: int
    track_id: int
    frame_index: int
    area: int


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


def validate_frame(frame: FrameLabeling, taxonomy: ClassTaxonomy) -> list[Violation]:
    """Check frame invariants; returns a (possibly empty) violation list."""
    out: list[Violation] = []
    n = frame.count
    if frame.class_ids.shape != frame.track_ids.shape or frame.class_ids.ndim != 1:
        out.append(Violation("shape_mismatch", "class/track arrays differ in shape"))
        return out
    expected = frame.shape.count
    if n != expected:
        out.append(Violation("shape_mismatch", f"{n} elements supplied, shape holds {expected}"))
    if expected <= 0:
        out.append(Violation("shape_mismatch", "empty shape"))

    known = np.array(sorted(taxonomy.by_id), dtype=np.int64)
    unknown = ~np.isin(frame.class_ids, known)
    if unknown.any():
        bad = sorted(set(frame.class_ids[unknown].tolist()))
        out.append(Violation("unknown_class", f"class ids not in taxonomy: {bad}"))

    thing_ids = np.array(taxonomy.thing_ids(), dtype=np.int64)
    is_thing = np.isin(frame.class_ids, thing_ids)
    if (is_thing & (frame.track_ids < 1)).any():
        out.append(Violation("thing_without_track", "thing element without track id"))
    if (~is_thing & ~unknown & (frame.track_ids != NO_TRACK)).any():
        out.append(Violation("stuff_with_track", "stuff element with nonzero track id"))
    if (frame.track_ids < 0).any():
        out.append(Violation("negative_track", "negative track id"))
    if frame.frame_index < 0:
        out.append(Violation("bad_frame_index", "negative frame index"))
    return out


def require_valid(frame: FrameLabeling, taxonomy: ClassTaxonomy) -> None:
    violations = validate_frame(frame, taxonomy)
    if violations:
        raise InputError("; ".join(v.message for v in violations))


def extract_segments(frame: FrameLabeling) -> list[Segment]:
    """One Segment per distinct (class_id, track_id) pair present in the frame.

    Void elements yield a segment too; downstream matching ignores it.
    """
    codes = encode_identity(frame.class_ids, frame.track_ids)
    uniq, counts = np.unique(codes, return_counts=True)
    segs = []
    for code, area in zip(uniq.tolist(), counts.tolist()):
        c, t = decode_identity(code)
        segs.append(Segment(c, t, frame.frame_index, int(area)))
    return segs


def encode_identity(class_ids: np.ndarray, track_ids: np.ndarray) -> np.ndarray:
    """Pack (class_id, track_id) into one int64 per element."""
    return (np.asarray(class_ids, dtype=np.int64) << 32) | np.asarray(track_ids, dtype=np.int64)


def decode_identity(code: int) -> tuple[int, int]:
    return int(code >> 32), int(code & 0xFFFFFFFF)


def frames_compatible(a: FrameLabeling, b: FrameLabeling) -> bool:
    return a.shape == b.shape and a.count == b.count


def make_grid_frame(class_map: np.ndarray, track_map: np.ndarray, frame_index: int = 0) -> FrameLabeling:
    class_map = np.asarray(class_map)
    track_map = np.asarray(track_map)
    h, w = class_map.shape
    return FrameLabeling(class_map.reshape(-1), track_map.reshape(-1), GridShape(w, h), frame_index)


def make_points_frame(class_ids: Iterable[int], track_ids: Iterable[int], frame_index: int = 0) -> FrameLabeling:
    c = np.asarray(list(class_ids) if not isinstance(class_ids, np.ndarray) else class_ids, dtype=np.int64)
    t = np.asarray(list(track_ids) if not isinstance(track_ids, np.ndarray) else track_ids, dtype=np.int64)
    return FrameLabeling(c, t, PointsShape(int(c.shape[0])), frame_index)
