"""Panoptic tracking evaluation toolkit: sPTQ/PTQ metrics, panoptic fusion,
embedding-based tracking, synthetic scenario generation, and file formats."""

from .core import (
    ClassEntry,
    ClassTaxonomy,
    FrameLabeling,
    GridShape,
    InputError,
    PointsShape,
    Segment,
    extract_segments,
    make_grid_frame,
    make_points_frame,
    validate_frame,
)
from .fusion import FusionConfig, InstanceCandidate, SemanticLogits, fuse_frame, fuse_logits
from .metrics import MetricReport, SegmentStats, evaluate_sequence, finalize_report
from .synth import CorruptionSpec, SynthConfig, apply_corruptions, generate_sequence
from .tracker import TrackerConfig, TrackerState, associate_frame, batch_hard_triplet_loss

__version__ = "0.1.0"

__all__ = [
    "ClassEntry",
    "ClassTaxonomy",
    "CorruptionSpec",
    "FrameLabeling",
    "FusionConfig",
    "GridShape",
    "InputError",
    "InstanceCandidate",
    "MetricReport",
    "PointsShape",
    "Segment",
    "SegmentStats",
    "SemanticLogits",
    "SynthConfig",
    "TrackerConfig",
    "TrackerState",
    "apply_corruptions",
    "associate_frame",
    "batch_hard_triplet_loss",
    "evaluate_sequence",
    "extract_segments",
    "finalize_report",
    "fuse_frame",
    "fuse_logits",
    "generate_sequence",
    "make_grid_frame",
    "make_points_frame",
    "validate_frame",
]
