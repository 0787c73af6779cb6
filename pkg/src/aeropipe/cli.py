"""Command-line front end.

Subcommands cover every capability: `encode` annotations into map tensors,
`detect` boxes from map tensors, `pipeline` for the full per-frame loop,
`eval` for average precision, `synth` for scene/sequence/crop fixtures,
`train` for the toy head trainer, `bench` for latency statistics, `send`
and `recv` as wire endpoints, and `overlay` to render boxes into a PPM.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import os
import re
import socket
import sys
import traceback

import numpy as np

from . import synth, tensorio, wire
from .annotations import AnnotationRecord, group_by_frame, read_annotations, write_annotations
from .boxgen import box_generator
from .densemaps import encode, load_maps, save_maps
from .evaluate import EvalConfig, action_map, detections_to_records, evaluate_map, records_to_detections
from .pipeline import (
    FrameRecord,
    Pipeline,
    PipelineConfig,
    bench_frames,
    config_from_mapping,
    parse_config_file,
)
from .synth import SceneConfig, corrupt_maps, generate_scene, generate_sequence, render_intensity
from .temporal import ActivityModel, AdamConfig, load_model, save_model, train_toy


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # noqa: A003 - argparse hook
        raise _UsageError(message)


def _parse_grid(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"(\d+)x(\d+)", text)
    if not m:
        raise ValueError(f"expected WIDTHxHEIGHT, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _load_pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    values = parse_config_file(args.config) if getattr(args, "config", None) else {}
    cfg = config_from_mapping(values)
    if getattr(args, "delta", None) is not None:
        cfg.boxgen.delta = args.delta
    if getattr(args, "iou", None) is not None:
        cfg.nms_iou = args.iou
    if getattr(args, "addr", None) is not None:
        cfg.address = args.addr
    return cfg


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_encode(args: argparse.Namespace) -> int:
    records = read_annotations(args.ann)
    frames = group_by_frame(records)
    grid = _parse_grid(args.grid)
    if args.out.endswith(".aero"):
        if len(frames) != 1:
            raise ValueError(
                f"{len(frames)} frames in {args.ann}; single-file output needs exactly one"
            )
        (records,) = frames.values()
        save_maps(args.out, encode([r.box for r in records], grid))
        return 0
    os.makedirs(args.out, exist_ok=True)
    for fid in sorted(frames):
        maps = encode([r.box for r in frames[fid]], grid)
        save_maps(os.path.join(args.out, f"frame_{fid:06d}.aero"), maps)
    return 0


def _maps_inputs(path: str) -> list[tuple[int, str]]:
    if os.path.isdir(path):
        entries = []
        for name in sorted(os.listdir(path)):
            m = re.fullmatch(r"frame_(\d+)\.aero", name)
            if m:
                entries.append((int(m.group(1)), os.path.join(path, name)))
        if not entries:
            raise ValueError(f"no frame_*.aero files under {path}")
        return entries
    return [(0, path)]


def cmd_detect(args: argparse.Namespace) -> int:
    cfg = _load_pipeline_config(args)
    records: list[AnnotationRecord] = []
    for fid, path in _maps_inputs(args.maps):
        if args.frame_id is not None:
            fid = args.frame_id
        for box in box_generator(load_maps(path), cfg.boxgen):
            records.append(AnnotationRecord(frame_id=fid, box=box))
    write_annotations(args.out, records)
    print(f"wrote {len(records)} boxes to {args.out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    os.makedirs(args.out, exist_ok=True)
    if args.kind == "crops":
        dataset = synth.crop_dataset(seed=args.seed)
        path = os.path.join(args.out, "crops.aero")
        tensorio.save_named_tensors(
            path,
            {
                "features": dataset.features.astype(np.float64),
                "primary_labels": dataset.primary_labels.astype(np.float64),
                "secondary_labels": dataset.secondary_labels.astype(np.float64),
                "pedestrian": dataset.pedestrian.astype(np.float64),
            },
        )
        print(f"wrote {dataset.features.shape[0]} crops to {path}")
        return 0

    scene_cfg = SceneConfig()
    if args.kind == "scene":
        scenes = [generate_scene(scene_cfg, args.seed)]
    else:
        scenes = generate_sequence(scene_cfg, args.frames, args.seed)
    entries = []
    all_records: list[AnnotationRecord] = []
    for k, scene in enumerate(scenes):
        maps = scene.maps
        if args.noise > 0.0:
            maps = corrupt_maps(maps, args.noise, scene_cfg.flip_probability, args.seed + 1000 + k)
        maps_name = f"frame_{scene.frame_id:06d}.aero"
        save_maps(os.path.join(args.out, maps_name), maps)
        all_records.extend(scene.records)
        entries.append((scene.frame_id, "annotations.txt", maps_name))
    write_annotations(os.path.join(args.out, "annotations.txt"), all_records)
    synth.write_manifest(os.path.join(args.out, "manifest.txt"), args.seed, scene_cfg.grid, entries)
    print(f"wrote {len(scenes)} frames to {args.out}")
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = _load_pipeline_config(args)
    seed, grid, entries = synth.read_manifest(args.manifest)
    base = os.path.dirname(os.path.abspath(args.manifest))
    ann_records = read_annotations(os.path.join(base, entries[0][1]))
    by_frame = group_by_frame(ann_records)

    os.makedirs(args.out, exist_ok=True)
    model = load_model(args.model) if args.model else None
    pipeline = Pipeline(cfg, model=model)
    predictions: list[AnnotationRecord] = []
    messages = []
    for fid, _, maps_name in entries:
        maps = load_maps(os.path.join(base, maps_name))
        intensity = render_intensity(by_frame.get(fid, []), (maps.width, maps.height))
        result = pipeline.run_frame(FrameRecord(frame_id=fid, maps=maps, intensity=intensity))
        predictions.extend(detections_to_records(result.detections))
        messages.append(result.message)
        total = sum(result.timings_ms.values())
        print(
            f"frame {fid}: {len(result.detections)} detections, "
            f"{len(result.payload)} B report, {total:.1f} ms",
            file=sys.stderr,
        )
    pred_path = os.path.join(args.out, "predictions.txt")
    write_annotations(pred_path, predictions, with_confidence=True)
    stream = wire.frame_stream(messages)
    reports_path = os.path.join(args.out, "reports.bin")
    with open(reports_path, "wb") as fh:
        fh.write(stream)
    print(f"wrote {pred_path} and {reports_path}")
    if cfg.address:
        host, port = wire.parse_address(cfg.address)
        with socket.create_connection((host, port)) as sock:
            sock.sendall(stream)
        print(f"sent {len(stream)} bytes to {cfg.address}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = EvalConfig(iou_threshold=args.iou if args.iou is not None else 0.5)
    gt = group_by_frame(read_annotations(args.gt))
    pred_records = read_annotations(args.pred)
    preds = {
        fid: records_to_detections(rows)
        for fid, rows in group_by_frame(pred_records).items()
    }
    ap, curve = evaluate_map(preds, gt, cfg)
    print(f"ap={ap:.6f}")
    has_actions = any(r.primary_action >= 0 for r in pred_records)
    if has_actions:
        primary_ap, secondary_ap = action_map(preds, gt, cfg)
        print(f"primary_ap={primary_ap:.6f}")
        print(f"secondary_ap={secondary_ap:.6f}")
    if args.curve:
        curve.write_csv(args.curve)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    dataset = synth.crop_dataset(seed=args.seed)
    model = ActivityModel.build(
        input_size=int(np.prod(dataset.features.shape[1:])),
        seed=args.seed + 1,
    )
    result = train_toy(
        model,
        dataset.features,
        dataset.primary_labels,
        dataset.secondary_labels,
        dataset.pedestrian,
        adam_cfg=AdamConfig(),
        epochs=args.epochs,
    )
    if args.out:
        save_model(args.out, model)
        print(f"saved model to {args.out}")
    if args.curve:
        with open(args.curve, "w", encoding="utf-8") as fh:
            fh.write("epoch,loss\n")
            for i, value in enumerate(result.loss_curve):
                fh.write(f"{i},{value:.6f}\n")
    print(
        f"final_loss={result.loss_curve[-1]:.6f} "
        f"train_accuracy={result.train_accuracy:.4f} "
        f"holdout_primary_accuracy={result.holdout_primary_accuracy:.4f} "
        f"holdout_secondary_accuracy={result.holdout_secondary_accuracy:.4f}"
    )
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _load_pipeline_config(args)
    report = bench_frames(
        cfg,
        frames=args.frames,
        boxes=args.boxes,
        seed=args.seed,
        latest_only=args.latest_only,
    )
    lines = report.csv_lines()
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)
    if report.skipped:
        print(f"skipped {report.skipped} frames (latest-only)", file=sys.stderr)
    return 0


def cmd_send(args: argparse.Namespace) -> int:
    with open(args.reports, "rb") as fh:
        stream = fh.read()
    messages, skipped = wire.unframe_stream(stream)
    if skipped:
        raise ValueError(f"{args.reports} contains {skipped} undecodable bytes")
    host, port = wire.parse_address(args.addr)
    with socket.create_connection((host, port)) as sock:
        sock.sendall(stream)
    print(f"sent {len(messages)} reports ({len(stream)} bytes) to {args.addr}")
    return 0


def cmd_recv(args: argparse.Namespace) -> int:
    host, port = wire.parse_address(args.addr)
    with socket.create_server((host, port)) as server:
        print(f"listening on {host}:{port}", file=sys.stderr)
        conn, peer = server.accept()
        with conn:
            data = conn.makefile("rb").read()
    messages, skipped = wire.unframe_stream(data)
    lines = [
        f"frame={m.frame_id} entries={len(m.entries)} size={m.encoded_size}"
        for m in messages
    ]
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)
    print(f"received {len(messages)} reports from {peer[0]}, skipped {skipped} bytes", file=sys.stderr)
    return 0


def cmd_overlay(args: argparse.Namespace) -> int:
    records = [r for r in read_annotations(args.ann) if r.frame_id == args.frame_id]
    grid = _parse_grid(args.grid)
    intensity = render_intensity(records, grid)
    rgb = np.repeat((intensity * 255).astype(np.uint8)[:, :, None], 3, axis=2)
    for rec in records:
        b = rec.box
        rgb[b.y0, b.x0 : b.x1 + 1] = (255, 40, 40)
        rgb[b.y1, b.x0 : b.x1 + 1] = (255, 40, 40)
        rgb[b.y0 : b.y1 + 1, b.x0] = (255, 40, 40)
        rgb[b.y0 : b.y1 + 1, b.x1] = (255, 40, 40)
    with open(args.out, "wb") as fh:
        fh.write(f"P6\n{grid[0]} {grid[1]}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="aeropipe", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: _Parser) -> None:
        p.add_argument("--config", help="flat key-value config file (section.key = value)")
        p.add_argument("--seed", type=int, default=0, help="pseudorandom seed")
        p.add_argument("--delta", type=float, help="override decode delta fraction")
        p.add_argument("--iou", type=float, help="override IoU threshold")
        p.add_argument("--addr", help="host:port wire endpoint")

    p = sub.add_parser("encode", help="rasterize annotations into map tensors")
    p.add_argument("--ann", required=True)
    p.add_argument("--grid", required=True, help="WIDTHxHEIGHT")
    p.add_argument("--out", required=True, help=".aero file (single frame) or directory")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("detect", help="decode boxes from map tensors")
    common(p)
    p.add_argument("--maps", required=True, help=".aero file or directory of frame_*.aero")
    p.add_argument("--frame-id", type=int, help="frame id for single-file input")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("synth", help="generate synthetic fixtures")
    common(p)
    p.add_argument("--kind", choices=("scene", "sequence", "crops"), default="sequence")
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--noise", type=float, default=0.0, help="regression noise amplitude")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="run the full per-frame loop on a manifest")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", help="trained model parameter file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("eval", help="average precision of predictions vs ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--iou", type=float)
    p.add_argument("--curve", help="write the PR curve CSV here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train", help="toy Adam training of the linear heads")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--out", help="model parameter file")
    p.add_argument("--curve", help="write the loss curve CSV here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench", help="per-stage latency statistics")
    common(p)
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--boxes", type=int, default=10)
    p.add_argument("--latest-only", action="store_true", help="drop frames that arrive mid-processing")
    p.add_argument("--out", help="also write the CSV here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("send", help="stream a reports file to a receiver")
    p.add_argument("--addr", required=True)
    p.add_argument("--reports", required=True, help="framed reports file")
    p.set_defaults(func=cmd_send)

    p = sub.add_parser("recv", help="receive one report stream and decode it")
    p.add_argument("--addr", required=True)
    p.add_argument("--out", help="write decoded summaries here")
    p.set_defaults(func=cmd_recv)

    p = sub.add_parser("overlay", help="render annotated boxes into a PPM image")
    p.add_argument("--ann", required=True)
    p.add_argument("--grid", required=True, help="WIDTHxHEIGHT")
    p.add_argument("--frame-id", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_overlay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_help(sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:  # pragma: no cover - defensive
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
