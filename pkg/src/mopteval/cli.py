"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import fusion, io_formats, metrics, oracle, synth, tracker
from .core import GridShape, InputError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mopt", description="Panoptic tracking evaluation toolkit")
    sub = p.add_subparsers(dest="command")

    p_eval = sub.add_parser("eval", help="evaluate a pred/gt sequence manifest")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--out", required=True, help="report json output path")

    p_fuse = sub.add_parser("fuse", help="fuse logit/candidate files into panoptic frames")
    p_fuse.add_argument("--logits", required=True, help="semantic logits container")
    p_fuse.add_argument("--candidates", required=True, help="candidate container")
    p_fuse.add_argument("--taxonomy", required=True)
    p_fuse.add_argument("--out-dir", required=True)
    p_fuse.add_argument("--u-p", type=float, default=0.5, help="confidence threshold")
    p_fuse.add_argument("--u-a", type=int, default=375, help="minimum stuff area")

    p_track = sub.add_parser("track", help="assign track ids to candidate embeddings")
    p_track.add_argument("--candidates", required=True)
    p_track.add_argument("--out", required=True)
    p_track.add_argument("--u-s", type=float, default=0.5, help="association confidence threshold")
    p_track.add_argument("--n-t", type=int, default=3, help="temporal window (frames)")
    p_track.add_argument("--alpha", type=float, default=0.2, help="triplet margin (diagnostic)")

    p_synth = sub.add_parser("synth", help="generate a synthetic gt/pred sequence")
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--frames", type=int, default=5)
    p_synth.add_argument("--width", type=int, default=32)
    p_synth.add_argument("--height", type=int, default=32)
    p_synth.add_argument("--objects", type=int, default=2)
    p_synth.add_argument(
        "--corrupt",
        action="append",
        default=[],
        metavar="SPEC",
        help="switch:FRAME:TRACK:LABEL | dropout:FRAME:TRACK | "
        "spurious:FRAME:CLASS:X0,Y0,X1,Y1 | erode:TRACK:FRACTION",
    )

    p_render = sub.add_parser("render", help="render a frame to a PPM overlay")
    p_render.add_argument("--frame", required=True, help="canonical frame file")
    p_render.add_argument("--taxonomy", required=True)
    p_render.add_argument("--out", required=True)
    p_render.add_argument("--palette-seed", type=int, default=0)

    sub.add_parser("selftest", help="run desk-scale oracle equivalence checks")
    return p


def _cmd_eval(args) -> int:
    m = io_formats.read_manifest(args.manifest)
    pred, gt, taxonomy = io_formats.load_manifest_frames(m)
    report = metrics.evaluate_sequence(pred, gt, taxonomy)
    io_formats.write_report(report, args.out)
    print(f"wrote {args.out} (sPTQ {report.sptq:.6f}, PTQ {report.ptq:.6f})")
    return EXIT_OK


def _cmd_fuse(args) -> int:
    taxonomy = io_formats.read_taxonomy(args.taxonomy)
    lh, larrays = io_formats.read_container(args.logits)
    ch, carrays = io_formats.read_container(args.candidates)
    channel_classes = tuple(lh["channel_classes"])
    config = fusion.FusionConfig(args.u_p, args.u_a)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    arr_iter = iter(carrays)
    next_track = 1
    for k, frame_meta in enumerate(ch["frames"]):
        logits = larrays[k]
        shape = GridShape(logits.shape[2], logits.shape[1])
        semantic = fusion.SemanticLogits(logits, channel_classes)
        cands = []
        for meta in frame_meta["candidates"]:
            mask = next(arr_iter)
            emb = next(arr_iter)
            tid = meta.get("track_id")
            if tid is None:
                tid, next_track = next_track, next_track + 1
            cands.append(
                fusion.InstanceCandidate(
                    class_id=int(meta["class_id"]),
                    score=float(meta["score"]),
                    box=tuple(meta["box"]),
                    mask_logits=mask,
                    embedding=emb if emb.size else None,
                    track_id=int(tid),
                )
            )
        frame = fusion.fuse_frame(semantic, cands, taxonomy, config, shape, k)
        io_formats.write_canonical(frame, out_dir / f"frame_{k:04d}.mopt")
    print(f"wrote {len(ch['frames'])} fused frames to {out_dir}")
    return EXIT_OK


def _cmd_track(args) -> int:
    ch, carrays = io_formats.read_container(args.candidates)
    config = tracker.TrackerConfig(args.u_s, args.n_t, args.alpha)
    state = tracker.TrackerState()
    arr_iter = iter(carrays)
    out_frames = []
    out_arrays = []
    for k, frame_meta in enumerate(ch["frames"]):
        cands = []
        for meta in frame_meta["candidates"]:
            mask = next(arr_iter)
            emb = next(arr_iter)
            cands.append(
                fusion.InstanceCandidate(
                    class_id=int(meta["class_id"]),
                    score=float(meta["score"]),
                    box=tuple(meta["box"]),
                    mask_logits=mask,
                    embedding=emb,
                )
            )
        tracked, state = tracker.associate_frame(state, cands, k, config)
        metas = []
        for c in tracked:
            metas.append(
                {
                    "class_id": c.class_id,
                    "score": c.score,
                    "box": list(c.box),
                    "track_id": c.track_id,
                }
            )
            out_arrays.append(c.mask_logits)
            out_arrays.append(c.embedding)
        out_frames.append({"candidates": metas})
    io_formats.write_container({"frames": out_frames}, out_arrays, args.out)
    print(f"wrote tracked candidates to {args.out}")
    return EXIT_OK


def _parse_corruptions(specs: list[str]) -> synth.CorruptionSpec:
    switches, dropouts, spurious, erosion = [], [], [], []
    for s in specs:
        parts = s.split(":")
        try:
            if parts[0] == "switch" and len(parts) == 4:
                switches.append((int(parts[1]), int(parts[2]), int(parts[3])))
            elif parts[0] == "dropout" and len(parts) == 3:
                dropouts.append((int(parts[1]), int(parts[2])))
            elif parts[0] == "spurious" and len(parts) == 4:
                box = tuple(int(v) for v in parts[3].split(","))
                if len(box) != 4:
                    raise ValueError(s)
                spurious.append((int(parts[1]), int(parts[2]), box))
            elif parts[0] == "erode" and len(parts) == 3:
                erosion.append((int(parts[1]), float(parts[2])))
            else:
                raise ValueError(s)
        except ValueError:
            raise _UsageError(f"bad corruption spec: {s!r}") from None
    return synth.CorruptionSpec(
        tuple(switches), tuple(dropouts), tuple(spurious), tuple(erosion)
    )


def _cmd_synth(args) -> int:
    config = synth.SynthConfig(
        seed=args.seed,
        frames=args.frames,
        width=args.width,
        height=args.height,
        num_objects=args.objects,
    )
    seq = synth.generate_sequence(config)
    spec = _parse_corruptions(args.corrupt)
    pred_frames, ledger = synth.apply_corruptions(seq, spec)

    out = Path(args.out_dir)
    (out / "gt").mkdir(parents=True, exist_ok=True)
    (out / "pred").mkdir(parents=True, exist_ok=True)
    gt_names, pred_names = [], []
    for k, (g, p) in enumerate(zip(seq.gt_frames, pred_frames)):
        gname, pname = f"gt/frame_{k:04d}.mopt", f"pred/frame_{k:04d}.mopt"
        io_formats.write_canonical(g, out / gname)
        io_formats.write_canonical(p, out / pname)
        gt_names.append(gname)
        pred_names.append(pname)
    (out / "taxonomy.json").write_text(
        json.dumps(io_formats.taxonomy_to_dict(seq.taxonomy), indent=2) + "\n"
    )
    manifest = {
        "taxonomy": "taxonomy.json",
        "pred": pred_names,
        "gt": gt_names,
        "format": "canonical",
        "dataset": f"synth-seed{args.seed}",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    ledger_doc = {
        str(c): {
            "TP": s.tp_count,
            "FP": s.fp_count,
            "FN": s.fn_count,
            "IDS": s.ids_count,
            "IoU_sum": round(s.iou_sum, 6),
            "sIDS": round(s.sids_sum, 6),
            "GT_segments": s.gt_segment_count,
        }
        for c, s in sorted(ledger.items())
    }
    (out / "ledger.json").write_text(json.dumps(ledger_doc, indent=2) + "\n")
    print(f"wrote synthetic sequence ({args.frames} frames) to {out}")
    return EXIT_OK


def _cmd_render(args) -> int:
    frame = io_formats.read_canonical(args.frame)
    taxonomy = io_formats.read_taxonomy(args.taxonomy)
    img = io_formats.render_overlay(frame, taxonomy, args.palette_seed)
    io_formats.write_ppm(img, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_selftest(args) -> int:
    rng = synth.SplitMix64(2024)
    n_seq = 20
    for i in range(n_seq):
        config = synth.SynthConfig(
            seed=rng.next_u64() & 0xFFFF,
            frames=1 + rng.randint(0, 3),
            width=8 + rng.randint(0, 16),
            height=8 + rng.randint(0, 16),
            num_objects=rng.randint(0, 3),
        )
        seq = synth.generate_sequence(config)
        pred, _ = synth.apply_corruptions(seq, synth.CorruptionSpec())
        fast = metrics.evaluate_sequence(pred, seq.gt_frames, seq.taxonomy)
        slow = oracle.naive_evaluate(pred, seq.gt_frames, seq.taxonomy)
        if abs(fast.sptq - slow.sptq) > 1e-12 or abs(fast.ptq - slow.ptq) > 1e-12:
            print(f"selftest FAILED on sequence {i}", file=sys.stderr)
            return EXIT_INTERNAL
    for _ in range(50):
        n = 1 + rng.randint(0, 4)
        m = 1 + rng.randint(0, 4)
        cost = np.array([[rng.uniform() * 10 for _ in range(m)] for _ in range(n)])
        mask = np.array([[rng.uniform() < 0.8 for _ in range(m)] for _ in range(n)])
        cost = np.where(mask, cost, np.inf)
        got = tracker.hungarian_assign(cost)
        total = sum(cost[r, c] for r, c in got.items())
        want, card = oracle.exhaustive_assignment(cost)
        if len(got) != card or abs(total - want) > 1e-9:
            print("selftest FAILED on assignment", file=sys.stderr)
            return EXIT_INTERNAL
    print(f"selftest ok ({n_seq} oracle sequences, 50 assignments)")
    return EXIT_OK


_COMMANDS = {
    "eval": _cmd_eval,
    "fuse": _cmd_fuse,
    "track": _cmd_track,
    "synth": _cmd_synth,
    "render": _cmd_render,
    "selftest": _cmd_selftest,
}


def cli_dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except AssertionError as e:
        print(f"internal invariant failure: {e}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
