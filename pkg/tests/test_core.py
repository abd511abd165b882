import numpy as np
import pytest

from mopteval.core import (
    ClassEntry,
    ClassTaxonomy,
    FrameLabeling,
    GridShape,
    InputError,
    extract_segments,
    make_grid_frame,
    make_points_frame,
    validate_frame,
)


class TestTaxonomy:
    def test_duplicate_ids_rejected(self):
        entries = (
            ClassEntry(0, "void", "stuff"),
            ClassEntry(0, "dup", "thing"),
        )
        with pytest.raises(InputError):
            ClassTaxonomy(entries, 0)

    def test_void_must_be_stuff(self):
        entries = (
            ClassEntry(0, "void", "thing"),
            ClassEntry(1, "road", "stuff"),
            ClassEntry(2, "car", "thing"),
        )
        with pytest.raises(InputError):
            ClassTaxonomy(entries, 0)

    def test_needs_thing_and_stuff(self):
        with pytest.raises(InputError):
            ClassTaxonomy((ClassEntry(0, "void", "stuff"),), 0)

    def test_simple_helper(self, taxonomy):
        assert taxonomy.void_id == 0
        assert taxonomy.stuff_ids(include_void=False) == [1]
        assert taxonomy.thing_ids() == [2, 3]


class TestValidateFrame:
    def test_minimal_valid(self, taxonomy):
        frame = make_grid_frame([[1]], [[0]])
        assert validate_frame(frame, taxonomy) == []

    def test_thing_without_track(self, taxonomy):
        frame = make_grid_frame([[2]], [[0]])
        violations = validate_frame(frame, taxonomy)
        assert any(v.code == "thing_without_track" for v in violations)

    def test_shape_mismatch(self, taxonomy):
        frame = FrameLabeling(
            np.array([1, 1, 1]), np.array([0, 0, 0]), GridShape(2, 2)
        )
        violations = validate_frame(frame, taxonomy)
        assert any(v.code == "shape_mismatch" for v in violations)

    def test_unknown_class(self, taxonomy):
        frame = make_grid_frame([[99]], [[0]])
        assert any(v.code == "unknown_class" for v in validate_frame(frame, taxonomy))

    def test_stuff_with_track(self, taxonomy):
        frame = make_grid_frame([[1]], [[5]])
        assert any(v.code == "stuff_with_track" for v in validate_frame(frame, taxonomy))


class TestExtractSegments:
    def test_single_segment(self):
        frame = make_grid_frame([[7, 7], [7, 7]], [[3, 3], [3, 3]])
        segs = extract_segments(frame)
        assert len(segs) == 1
        s = segs[0]
        assert (s.class_id, s.track_id, s.area) == (7, 3, 4)

    def test_enumeration(self):
        frame = make_points_frame([1, 1, 2, 2], [0, 0, 5, 6])
        areas = sorted(s.area for s in extract_segments(frame))
        assert areas == [1, 1, 2]

    def test_identity_not_connectivity(self):
        # two disconnected blobs sharing (class 2, track 9) are ONE segment
        class_map = np.full((3, 5), 1)
        track_map = np.zeros((3, 5), dtype=int)
        class_map[0, 0] = 2
        track_map[0, 0] = 9
        class_map[2, 4] = 2
        track_map[2, 4] = 9
        segs = extract_segments(make_grid_frame(class_map, track_map))
        matching = [s for s in segs if s.class_id == 2 and s.track_id == 9]
        assert len(matching) == 1
        assert matching[0].area == 2

    def test_partition(self, taxonomy):
        rng = np.random.default_rng(7)
        from conftest import random_valid_frame

        frame = random_valid_frame(rng, 9, 7, taxonomy)
        segs = extract_segments(frame)
        assert sum(s.area for s in segs) == frame.count

    def test_points_permutation_invariant(self):
        rng = np.random.default_rng(3)
        c = rng.integers(1, 4, size=30)
        t = np.where(c > 1, rng.integers(1, 3, size=30), 0)
        perm = rng.permutation(30)
        a = {(s.class_id, s.track_id, s.area) for s in extract_segments(make_points_frame(c, t))}
        b = {
            (s.class_id, s.track_id, s.area)
            for s in extract_segments(make_points_frame(c[perm], t[perm]))
        }
        assert a == b
