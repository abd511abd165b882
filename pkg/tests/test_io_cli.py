import json

import numpy as np
import pytest

from mopteval.cli import cli_dispatch
from mopteval.core import make_grid_frame, make_points_frame
from mopteval.io_formats import (
    FormatError,
    read_canonical,
    read_container,
    read_idmap_png,
    read_manifest,
    read_point_labels,
    render_overlay,
    report_to_dict,
    taxonomy_to_dict,
    write_canonical,
    write_container,
    write_report,
)
from mopteval.metrics import evaluate_sequence
from mopteval.synth import CorruptionSpec, SynthConfig, apply_corruptions, generate_sequence


class TestCanonicalFormat:
    def test_round_trip_grid(self, tmp_path):
        frame = make_grid_frame([[1, 2], [1, 3]], [[0, 4], [0, 5]])
        p = tmp_path / "f.mopt"
        write_canonical(frame, p)
        back = read_canonical(p)
        assert np.array_equal(back.class_ids, frame.class_ids)
        assert np.array_equal(back.track_ids, frame.track_ids)
        assert back.shape == frame.shape

    def test_round_trip_points(self, tmp_path):
        frame = make_points_frame([1, 2, 2], [0, 7, 8])
        p = tmp_path / "f.mopt"
        write_canonical(frame, p)
        back = read_canonical(p)
        assert back.shape == frame.shape
        assert np.array_equal(back.track_ids, frame.track_ids)

    def test_golden_bytes(self, tmp_path):
        frame = make_grid_frame([[3]], [[0]])
        p = tmp_path / "g.mopt"
        write_canonical(frame, p)
        golden = bytes.fromhex("4d4f5054" "0100" "00" "01000000" "01000000" "0300" "0000")
        assert p.read_bytes() == golden

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.mopt"
        p.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(FormatError):
            read_canonical(p)

    def test_truncation(self, tmp_path):
        frame = make_grid_frame([[1, 1]], [[0, 0]])
        p = tmp_path / "t.mopt"
        write_canonical(frame, p)
        p.write_bytes(p.read_bytes()[:-2])
        with pytest.raises(FormatError):
            read_canonical(p)

    def test_version_mismatch(self, tmp_path):
        frame = make_grid_frame([[1]], [[0]])
        p = tmp_path / "v.mopt"
        write_canonical(frame, p)
        data = bytearray(p.read_bytes())
        data[4] = 9
        p.write_bytes(bytes(data))
        with pytest.raises(FormatError):
            read_canonical(p)


class TestIdmapPng:
    def _write(self, tmp_path, pixels, segments):
        from PIL import Image

        img = Image.fromarray(np.asarray(pixels, dtype=np.uint8), "RGB")
        ip = tmp_path / "f.png"
        img.save(ip)
        jp = tmp_path / "f.json"
        jp.write_text(json.dumps({"segments": segments}))
        return ip, jp

    def test_black_maps_to_background(self, tmp_path):
        ip, jp = self._write(
            tmp_path,
            np.zeros((2, 2, 3)),
            [{"id": 0, "category_id": 1, "track_id": 0}],
        )
        frame = read_idmap_png(ip, jp, void_id=0)
        assert (frame.class_ids == 1).all()

    def test_id_arithmetic(self, tmp_path):
        px = np.zeros((1, 1, 3))
        px[0, 0] = [5, 1, 0]  # id = 5 + 256*1 = 261
        ip, jp = self._write(tmp_path, px, [{"id": 261, "category_id": 2, "track_id": 9}])
        frame = read_idmap_png(ip, jp, void_id=0)
        assert frame.class_ids[0] == 2 and frame.track_ids[0] == 9

    def test_unknown_id_is_void(self, tmp_path):
        px = np.zeros((1, 1, 3))
        px[0, 0] = [7, 0, 0]
        ip, jp = self._write(tmp_path, px, [])
        frame = read_idmap_png(ip, jp, void_id=0)
        assert frame.class_ids[0] == 0 and frame.track_ids[0] == 0

    def test_malformed_json(self, tmp_path):
        ip, _ = self._write(tmp_path, np.zeros((1, 1, 3)), [])
        jp = tmp_path / "bad.json"
        jp.write_text("{nope")
        with pytest.raises(FormatError):
            read_idmap_png(ip, jp, void_id=0)


class TestPointLabels:
    def test_bit_split(self, tmp_path):
        p = tmp_path / "pts.label"
        p.write_bytes((0x00000009).to_bytes(4, "little") + (0x00020009).to_bytes(4, "little"))
        frame = read_point_labels(p)
        assert frame.class_ids.tolist() == [9, 9]
        assert frame.track_ids.tolist() == [0, 2]

    def test_remap(self, tmp_path):
        p = tmp_path / "pts.label"
        p.write_bytes((0x00000009).to_bytes(4, "little"))
        frame = read_point_labels(p, class_map={9: 2})
        assert frame.class_ids.tolist() == [2]

    def test_bad_length(self, tmp_path):
        p = tmp_path / "pts.label"
        p.write_bytes(b"\x00\x01\x02")
        with pytest.raises(FormatError):
            read_point_labels(p)

    def test_empty_rejected(self, tmp_path):
        p = tmp_path / "pts.label"
        p.write_bytes(b"")
        with pytest.raises(FormatError):
            read_point_labels(p)


class TestReport:
    def _report(self, corrupted=False):
        seq = generate_sequence(SynthConfig(seed=4, frames=10, num_objects=1))
        spec = CorruptionSpec(id_switches=((5, 1, 42),)) if corrupted else CorruptionSpec()
        pred, _ = apply_corruptions(seq, spec)
        return evaluate_sequence(pred, seq.gt_frames, seq.taxonomy), seq

    def test_perfect_sequence_serialization(self, tmp_path):
        report, _ = self._report()
        out = tmp_path / "r.json"
        write_report(report, out)
        doc = json.loads(out.read_text())
        assert doc["aggregate"]["sPTQ"] == 1.0

    def test_switch_scenario_value(self):
        report, seq = self._report(corrupted=True)
        doc = report_to_dict(report)
        cls = str(seq.objects[0].class_id)
        assert doc["per_class"][cls]["sPTQ"] == 0.9

    def test_deterministic_bytes(self, tmp_path):
        report, _ = self._report(corrupted=True)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        write_report(report, a)
        write_report(report, b)
        assert a.read_bytes() == b.read_bytes()

    def test_excluded_class_absent(self):
        report, seq = self._report()
        doc = report_to_dict(report)
        present = {seq.objects[0].class_id, 1}
        assert set(doc["per_class"]) == {str(c) for c in present}


class TestOverlay:
    def test_track_color_stable(self):
        seq = generate_sequence(SynthConfig(seed=3, frames=2, num_objects=1))
        imgs = [render_overlay(f, seq.taxonomy) for f in seq.gt_frames]
        _, t0 = seq.gt_frames[0].grid()
        _, t1 = seq.gt_frames[1].grid()
        c0 = imgs[0][t0 == 1][0]
        c1 = imgs[1][t1 == 1][0]
        assert np.array_equal(c0, c1)

    def test_void_is_black(self, taxonomy):
        frame = make_grid_frame([[0]], [[0]])
        img = render_overlay(frame, taxonomy)
        assert img.tolist() == [[[0, 0, 0]]]

    def test_points_frame_rejected(self, taxonomy):
        frame = make_points_frame([1], [0])
        with pytest.raises(Exception):
            render_overlay(frame, taxonomy)


class TestContainer:
    def test_round_trip(self, tmp_path):
        arrays = [np.arange(6, dtype=float).reshape(2, 3), np.ones(4)]
        p = tmp_path / "c.bin"
        write_container({"frames": []}, arrays, p)
        header, back = read_container(p)
        assert header["frames"] == []
        for a, b in zip(arrays, back):
            assert np.allclose(a, b)

    def test_truncated(self, tmp_path):
        p = tmp_path / "c.bin"
        write_container({}, [np.ones(10)], p)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(FormatError):
            read_container(p)


class TestManifest:
    def test_missing_file_rejected(self, tmp_path):
        m = tmp_path / "manifest.json"
        m.write_text(json.dumps({"taxonomy": "t.json", "pred": ["x.mopt"], "gt": ["y.mopt"]}))
        with pytest.raises(FormatError):
            read_manifest(m)


class TestCli:
    def test_unknown_subcommand(self, capsys):
        assert cli_dispatch(["frobnicate"]) == 1

    def test_no_subcommand(self, capsys):
        assert cli_dispatch([]) == 1

    def test_synth_then_eval_perfect(self, tmp_path, capsys):
        out = tmp_path / "seq"
        assert cli_dispatch(["synth", "--out-dir", str(out), "--seed", "3", "--frames", "4"]) == 0
        report = tmp_path / "report.json"
        assert cli_dispatch(["eval", "--manifest", str(out / "manifest.json"),
                             "--out", str(report)]) == 0
        doc = json.loads(report.read_text())
        assert doc["aggregate"]["sPTQ"] == 1.0

    def test_synth_with_corruption(self, tmp_path):
        out = tmp_path / "seq"
        rc = cli_dispatch([
            "synth", "--out-dir", str(out), "--seed", "4", "--frames", "10",
            "--objects", "1", "--corrupt", "switch:5:1:42",
        ])
        assert rc == 0
        ledger = json.loads((out / "ledger.json").read_text())
        assert any(v["IDS"] == 1 for v in ledger.values())
        report = tmp_path / "report.json"
        assert cli_dispatch(["eval", "--manifest", str(out / "manifest.json"),
                             "--out", str(report)]) == 0
        doc = json.loads(report.read_text())
        switched = [v for v in doc["per_class"].values() if v["IDS"] == 1]
        assert switched and switched[0]["sPTQ"] == 0.9

    def test_bad_corruption_spec(self, tmp_path):
        rc = cli_dispatch(["synth", "--out-dir", str(tmp_path / "s"),
                           "--corrupt", "bogus:1"])
        assert rc == 1

    def test_eval_missing_manifest(self, tmp_path):
        rc = cli_dispatch(["eval", "--manifest", str(tmp_path / "nope.json"),
                           "--out", str(tmp_path / "r.json")])
        assert rc == 2

    def test_render(self, tmp_path):
        out = tmp_path / "seq"
        cli_dispatch(["synth", "--out-dir", str(out), "--frames", "1"])
        rc = cli_dispatch([
            "render", "--frame", str(out / "gt" / "frame_0000.mopt"),
            "--taxonomy", str(out / "taxonomy.json"),
            "--out", str(tmp_path / "o.ppm"),
        ])
        assert rc == 0
        assert (tmp_path / "o.ppm").read_bytes().startswith(b"P6\n")

    def test_track_round_trip(self, tmp_path):
        seq = generate_sequence(SynthConfig(seed=5, frames=3, num_objects=2))
        frames, arrays = [], []
        for cands in seq.candidates:
            metas = []
            for c in cands:
                metas.append({"class_id": c.class_id, "score": c.score, "box": list(c.box)})
                arrays.append(c.mask_logits)
                arrays.append(c.embedding)
            frames.append({"candidates": metas})
        src = tmp_path / "cands.bin"
        write_container({"frames": frames}, arrays, src)
        dst = tmp_path / "tracked.bin"
        assert cli_dispatch(["track", "--candidates", str(src), "--out", str(dst)]) == 0
        header, _ = read_container(dst)
        ids = [c["track_id"] for f in header["frames"] for c in f["candidates"]]
        assert all(i is not None for i in ids)
        # each object keeps one id across the sequence
        per_frame = [[c["track_id"] for c in f["candidates"]] for f in header["frames"]]
        assert per_frame[0] == per_frame[1] == per_frame[2]

    def test_fuse(self, tmp_path):
        seq = generate_sequence(SynthConfig(seed=5, frames=2, num_objects=1))
        lframes, larrays = [], []
        for sem in seq.semantic:
            larrays.append(sem.values)
        cframes, carrays = [], []
        for cands in seq.candidates:
            metas = []
            for c in cands:
                metas.append({
                    "class_id": c.class_id, "score": c.score, "box": list(c.box),
                    "track_id": 1,
                })
                carrays.append(c.mask_logits)
                carrays.append(c.embedding)
            cframes.append({"candidates": metas})
        lp, cp = tmp_path / "logits.bin", tmp_path / "cands.bin"
        write_container(
            {"channel_classes": list(seq.semantic[0].channel_classes)}, larrays, lp
        )
        write_container({"frames": cframes}, carrays, cp)
        tax = tmp_path / "tax.json"
        tax.write_text(json.dumps(taxonomy_to_dict(seq.taxonomy)))
        out = tmp_path / "fused"
        rc = cli_dispatch([
            "fuse", "--logits", str(lp), "--candidates", str(cp),
            "--taxonomy", str(tax), "--out-dir", str(out), "--u-a", "0",
        ])
        assert rc == 0
        fused = [read_canonical(out / f"frame_{k:04d}.mopt", k) for k in range(2)]
        report = evaluate_sequence(fused, seq.gt_frames, seq.taxonomy)
        assert report.pq == pytest.approx(1.0)

    def test_selftest(self):
        assert cli_dispatch(["selftest"]) == 0
