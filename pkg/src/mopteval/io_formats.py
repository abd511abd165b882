"""File formats: canonical frame files, panoptic id-map PNG ingestion, LiDAR
point label files, report serialization, and overlay rendering."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    ClassEntry,
    ClassTaxonomy,
    FrameLabeling,
    GridShape,
    InputError,
    PointsShape,
    make_points_frame,
)
from .metrics import MetricReport
from .synth import SplitMix64

MAGIC = b"MOPT"
FORMAT_VERSION = 1

_KIND_GRID = 0
_KIND_POINTS = 1


class FormatError(InputError):
    """Malformed or truncated file."""


def write_canonical(frame: FrameLabeling, path: str | Path) -> None:
    """Binary layout: magic "MOPT", u16 LE version, u8 shape kind (0 grid /
    1 points), two u32 LE dims (width,height or count,0), then u16 LE
    class_id + u16 LE track_id per element."""
    if isinstance(frame.shape, GridShape):
        kind, d0, d1 = _KIND_GRID, frame.shape.width, frame.shape.height
    else:
        kind, d0, d1 = _KIND_POINTS, frame.shape.count, 0
    header = MAGIC + struct.pack("<HBII", FORMAT_VERSION, kind, d0, d1)
    body = np.empty(frame.count * 2, dtype="<u2")
    body[0::2] = frame.class_ids.astype("<u2")
    body[1::2] = frame.track_ids.astype("<u2")
    Path(path).write_bytes(header + body.tobytes())


def read_canonical(path: str | Path, frame_index: int = 0) -> FrameLabeling:
    data = Path(path).read_bytes()
    if len(data) < 15:
        raise FormatError(f"{path}: truncated header")
    if data[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic")
    version, kind, d0, d1 = struct.unpack("<HBII", data[4:15])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if kind == _KIND_GRID:
        shape: GridShape | PointsShape = GridShape(d0, d1)
    elif kind == _KIND_POINTS:
        shape = PointsShape(d0)
    else:
        raise FormatError(f"{path}: unknown shape kind {kind}")
    n = shape.count
    if len(data) != 15 + 4 * n:
        raise FormatError(f"{path}: truncated payload ({len(data)} bytes, expected {15 + 4 * n})")
    body = np.frombuffer(data, dtype="<u2", offset=15)
    return FrameLabeling(
        body[0::2].astype(np.int64), body[1::2].astype(np.int64), shape, frame_index
    )


def read_idmap_png(image_path: str | Path, segments_json_path: str | Path,
                   void_id: int, frame_index: int = 0) -> FrameLabeling:
    """COCO-panoptic-style ingestion: per-pixel segment id = R + 256 G + 65536 B,
    mapped through a json of {"segments": [{"id", "category_id", "track_id"}]}.
    Unknown ids map to void."""
    from PIL import Image

    try:
        img = np.asarray(Image.open(image_path).convert("RGB"), dtype=np.int64)
    except Exception as e:
        raise FormatError(f"{image_path}: unreadable image ({e})") from e
    try:
        meta = json.loads(Path(segments_json_path).read_text())
        mapping = {
            int(s["id"]): (int(s["category_id"]), int(s.get("track_id", 0)))
            for s in meta["segments"]
        }
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
        raise FormatError(f"{segments_json_path}: malformed segments json ({e})") from e

    ids = img[..., 0] + 256 * img[..., 1] + 65536 * img[..., 2]
    h, w = ids.shape
    class_map = np.full((h, w), void_id, dtype=np.int64)
    track_map = np.zeros((h, w), dtype=np.int64)
    for seg_id, (c, t) in mapping.items():
        sel = ids == seg_id
        class_map[sel] = c
        track_map[sel] = t
    return FrameLabeling(
        class_map.reshape(-1), track_map.reshape(-1), GridShape(w, h), frame_index
    )


def read_point_labels(path: str | Path, class_map: dict[int, int] | None = None,
                      frame_index: int = 0) -> FrameLabeling:
    """One u32 LE word per point: class in the low 16 bits, track in the high
    16 bits; classes optionally remapped through a taxonomy map."""
    data = Path(path).read_bytes()
    if len(data) % 4 != 0:
        raise FormatError(f"{path}: length {len(data)} not divisible by 4")
    words = np.frombuffer(data, dtype="<u4")
    if words.size == 0:
        raise FormatError(f"{path}: empty point file")
    classes = (words & 0xFFFF).astype(np.int64)
    tracks = (words >> 16).astype(np.int64)
    if class_map:
        lut_keys = np.array(sorted(class_map), dtype=np.int64)
        lut_vals = np.array([class_map[k] for k in sorted(class_map)], dtype=np.int64)
        idx = np.searchsorted(lut_keys, classes)
        idx = np.clip(idx, 0, lut_keys.size - 1)
        hit = lut_keys[idx] == classes
        classes = np.where(hit, lut_vals[idx], classes)
    return make_points_frame(classes, tracks, frame_index)


def _fmt(x: float) -> float:
    return float(f"{x:.6f}")


def report_to_dict(report: MetricReport) -> dict:
    per_class = {}
    for c in sorted(report.per_class):
        m = report.per_class[c]
        per_class[str(c)] = {
            "sPTQ": _fmt(m.sptq),
            "PTQ": _fmt(m.ptq),
            "PQ": _fmt(m.pq),
            "SQ": _fmt(m.sq),
            "RQ": _fmt(m.rq),
            "TP": m.stats.tp_count,
            "FP": m.stats.fp_count,
            "FN": m.stats.fn_count,
            "IDS": m.stats.ids_count,
            "sIDS": _fmt(m.stats.sids_sum),
            "IoU_sum": _fmt(m.stats.iou_sum),
            "GT_segments": m.stats.gt_segment_count,
        }
    return {
        "aggregate": {
            "sPTQ": _fmt(report.sptq),
            "PTQ": _fmt(report.ptq),
            "PQ": _fmt(report.pq),
            "SQ": _fmt(report.sq),
            "RQ": _fmt(report.rq),
            "sMOTSA": _fmt(report.smotsa),
            "MOTSA": _fmt(report.motsa),
            "MOTSP": _fmt(report.motsp),
        },
        "per_class": per_class,
    }


def write_report(report: MetricReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report_to_dict(report), indent=2, sort_keys=False) + "\n")


# --- taxonomy json ----------------------------------------------------------

def taxonomy_to_dict(taxonomy: ClassTaxonomy) -> dict:
    return {
        "void_id": taxonomy.void_id,
        "classes": [
            {"id": e.class_id, "name": e.name, "kind": e.kind} for e in taxonomy.entries
        ],
    }


def taxonomy_from_dict(d: dict) -> ClassTaxonomy:
    entries = tuple(
        ClassEntry(int(c["id"]), str(c["name"]), str(c["kind"])) for c in d["classes"]
    )
    return ClassTaxonomy(entries, int(d["void_id"]))


def read_taxonomy(path: str | Path) -> ClassTaxonomy:
    try:
        return taxonomy_from_dict(json.loads(Path(path).read_text()))
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: malformed taxonomy ({e})") from e


# --- sequence manifest ------------------------------------------------------

@dataclass(frozen=True)
class SequenceManifest:
    taxonomy_path: str
    pred_files: tuple[str, ...]
    gt_files: tuple[str, ...]
    format: str = "canonical"
    dataset: str = ""


def read_manifest(path: str | Path) -> SequenceManifest:
    base = Path(path).parent
    try:
        d = json.loads(Path(path).read_text())
        m = SequenceManifest(
            taxonomy_path=str(base / d["taxonomy"]),
            pred_files=tuple(str(base / f) for f in d["pred"]),
            gt_files=tuple(str(base / f) for f in d["gt"]),
            format=d.get("format", "canonical"),
            dataset=d.get("dataset", ""),
        )
    except (KeyError, TypeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: malformed manifest ({e})") from e
    if len(m.pred_files) != len(m.gt_files):
        raise FormatError(f"{path}: pred/gt lists differ in length")
    for f in m.pred_files + m.gt_files + (m.taxonomy_path,):
        if not Path(f).exists():
            raise FormatError(f"{path}: referenced file missing: {f}")
    return m


def load_manifest_frames(m: SequenceManifest) -> tuple[list[FrameLabeling], list[FrameLabeling], ClassTaxonomy]:
    if m.format != "canonical":
        raise FormatError(f"unsupported manifest format {m.format!r}")
    taxonomy = read_taxonomy(m.taxonomy_path)
    pred = [read_canonical(f, i) for i, f in enumerate(m.pred_files)]
    gt = [read_canonical(f, i) for i, f in enumerate(m.gt_files)]
    return pred, gt, taxonomy


# --- overlay rendering ------------------------------------------------------

def _track_color(track_id: int) -> tuple[int, int, int]:
    rng = SplitMix64(0xC0FFEE ^ track_id)
    # avoid very dark colors so instances stand out against void black
    return tuple(64 + rng.next_u64() % 192 for _ in range(3))


def _stuff_color(class_id: int, palette_seed: int) -> tuple[int, int, int]:
    rng = SplitMix64(palette_seed * 0x9E3779B9 + class_id)
    return tuple(32 + rng.next_u64() % 160 for _ in range(3))


def render_overlay(frame: FrameLabeling, taxonomy: ClassTaxonomy,
                   palette_seed: int = 0) -> np.ndarray:
    """(H, W, 3) uint8 overlay: fixed palette for stuff, per-track hash color
    for things (stable across frames), black for void."""
    if not isinstance(frame.shape, GridShape):
        raise InputError("overlay rendering needs a grid frame")
    class_map, track_map = frame.grid()
    h, w = class_map.shape
    out = np.zeros((h, w, 3), dtype=np.uint8)
    for c in np.unique(class_map).tolist():
        if c == taxonomy.void_id:
            continue
        sel = class_map == c
        if taxonomy.is_thing(c):
            for t in np.unique(track_map[sel]).tolist():
                out[sel & (track_map == t)] = _track_color(int(t))
        else:
            out[sel] = _stuff_color(int(c), palette_seed)
    return out


def write_ppm(image: np.ndarray, path: str | Path) -> None:
    h, w, _ = image.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + image.astype(np.uint8).tobytes())


# --- candidate / logit interchange container --------------------------------
#
# Container layout: u32 LE header length, utf-8 json header, then float32 LE
# array payloads concatenated in header order.

def write_container(header: dict, arrays: list[np.ndarray], path: str | Path) -> None:
    header = dict(header)
    header["arrays"] = [list(a.shape) for a in arrays]
    hjson = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(hjson)))
        fh.write(hjson)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def read_container(path: str | Path) -> tuple[dict, list[np.ndarray]]:
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise FormatError(f"{path}: truncated container")
    (hlen,) = struct.unpack("<I", data[:4])
    if len(data) < 4 + hlen:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[4 : 4 + hlen].decode())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: malformed container header ({e})") from e
    offset = 4 + hlen
    arrays = []
    for shape in header.get("arrays", []):
        n = int(np.prod(shape)) if shape else 1
        end = offset + 4 * n
        if end > len(data):
            raise FormatError(f"{path}: truncated payload")
        arrays.append(np.frombuffer(data, dtype="<f4", count=n, offset=offset)
                      .reshape(shape).astype(np.float64))
        offset = end
    return header, arrays
