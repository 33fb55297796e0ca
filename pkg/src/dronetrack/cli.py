"""Command-line interface: track, eval-det, eval-mot, anchors report, synth.

Every run that writes an output also writes a JSON manifest next to it with
the resolved configuration, input digests, tool version, and wall-clock
duration, so results can be reproduced. Exit codes: 0 success, 1 input or
validation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import hashlib
import json
import sys
import time
from pathlib import Path

from . import __version__
from .anchors import (
    AnchorConfig,
    baseline_config,
    coverage_report,
    dense_config,
    scale_range,
)
from .detection import Detection, group_by_frame
from .evaluation import (
    EvalConfig,
    detection_ground_truth,
    eval_detection,
    eval_tracking,
    tracking_ground_truth,
)
from .io_formats import (
    EmbeddingTable,
    FormatError,
    build_tracker_params,
    parse_annotations,
    parse_detections,
    parse_tracker_config_values,
    parse_tracks,
    read_embeddings,
    write_annotations,
    write_detections,
    write_embeddings,
    write_tracks,
)
from .postprocess import MAX_DETECTIONS, NMS_IOU, SCORE_THRESH, TOPK_PER_LEVEL, nms_pipeline
from .synth import SynthConfig, generate
from .tracker import run_sequence

__all__ = ["dispatch", "main"]


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


class _ManifestWriter:
    """Collects inputs/outputs for the reproducibility manifest."""

    def __init__(self, command: str, settings: dict):
        self.command = command
        self.settings = settings
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self._started = time.monotonic()

    def add_input(self, path) -> None:
        p = Path(path)
        if p.is_file():
            self.inputs[str(p)] = _sha256(p)

    def add_output(self, path) -> None:
        self.outputs.append(str(path))

    def write(self, anchor_path) -> None:
        anchor = Path(anchor_path)
        target = (
            anchor / "run.manifest.json"
            if anchor.is_dir()
            else anchor.with_name(anchor.name + ".manifest.json")
        )
        payload = {
            "command": self.command,
            "settings": self.settings,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "tool_version": __version__,
            "duration_seconds": round(time.monotonic() - self._started, 6),
        }
        target.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _parse_set_overrides(pairs) -> dict:
    values: dict[str, str] = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ValueError(f"--set expects key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        values[key.strip()] = value.strip()
    return values


def _resolve_tracker_params(config_path, overrides):
    values: dict = {}
    if config_path:
        text = Path(config_path).read_text(encoding="utf-8")
        values.update(parse_tracker_config_values(text, str(config_path)))
    raw = _parse_set_overrides(overrides)
    for key, value in raw.items():
        if key in ("n_init", "max_age", "gallery_budget"):
            values[key] = int(value)
        else:
            values[key] = float(value)
    return build_tracker_params(values)


def _apply_prefilter(detections, args) -> list[Detection]:
    """Optional score-threshold / top-k / NMS pass on raw detections."""
    grouped = group_by_frame(detections)
    filtered: list[Detection] = []
    for frame_id in sorted(grouped):
        filtered.extend(
            nms_pipeline(
                [grouped[frame_id]],
                score_thresh=args.score_thresh,
                topk_per_level=args.topk_per_level,
                nms_iou=args.nms_iou,
                max_dets=args.max_dets,
            )
        )
    return filtered


def _subset_embeddings(detections, table):
    """Rebuild (detections, table) after filtering so rows align 1:1 again."""
    if table is None:
        return detections, None
    refs = [d.embedding_ref for d in detections]
    if any(r is None or not 0 <= r < table.count for r in refs):
        raise ValueError("filtered detections no longer resolve into the embedding table")
    data = table.data[refs]
    renumbered = [
        dataclasses.replace(det, embedding_ref=i) for i, det in enumerate(detections)
    ]
    return renumbered, EmbeddingTable(dim=table.dim, data=data)


def _emit_report(report, args, manifest: _ManifestWriter) -> None:
    body = (
        json.dumps(report.to_dict(), indent=2) + "\n"
        if args.format == "json"
        else report.format_text()
    )
    if args.output:
        Path(args.output).write_text(body, encoding="utf-8")
        manifest.add_output(args.output)
        manifest.write(args.output)
    else:
        sys.stdout.write(body)


# --- track -------------------------------------------------------------------


def _track_one(det_path: Path, emb_path: Path | None, out_path: Path, params, args, manifest):
    detections = parse_detections(det_path)
    manifest.add_input(det_path)
    table = None
    if emb_path is not None:
        table = read_embeddings(emb_path)
        manifest.add_input(emb_path)
    if args.pre_nms:
        detections = _apply_prefilter(detections, args)
        detections, table = _subset_embeddings(detections, table)
    rows = run_sequence(detections, table, params)
    write_tracks(rows, out_path)
    manifest.add_output(out_path)


def _cmd_track(args) -> int:
    params = _resolve_tracker_params(args.config, args.set)
    manifest = _ManifestWriter("track", _manifest_settings(args, params=params))
    if args.config:
        manifest.add_input(args.config)

    det_path = Path(args.detections)
    out_path = Path(args.output)
    if det_path.is_dir():
        out_path.mkdir(parents=True, exist_ok=True)
        jobs = []
        for seq in sorted(det_path.glob("*.txt")):
            emb = None
            if args.embeddings:
                emb = Path(args.embeddings) / (seq.stem + ".emb")
                if not emb.is_file():
                    raise FileNotFoundError(f"no embedding file for sequence {seq.name}: {emb}")
            jobs.append((seq, emb, out_path / seq.name))
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            futures = [
                pool.submit(_track_one, seq, emb, out, params, args, manifest)
                for seq, emb, out in jobs
            ]
            for future in futures:
                future.result()
        manifest.write(out_path)
    else:
        emb = Path(args.embeddings) if args.embeddings else None
        _track_one(det_path, emb, out_path, params, args, manifest)
        manifest.write(out_path)
    return 0


# --- eval --------------------------------------------------------------------


def _cmd_eval_det(args) -> int:
    manifest = _ManifestWriter("eval-det", _manifest_settings(args))
    predictions = parse_detections(args.detections)
    manifest.add_input(args.detections)
    annotations = parse_annotations(args.gt)
    manifest.add_input(args.gt)
    if args.pre_nms:
        predictions = _apply_prefilter(predictions, args)
    ground_truth, ignore_regions = detection_ground_truth(annotations)
    report = eval_detection(
        predictions, ground_truth, EvalConfig.detection(), ignore_regions
    )
    _emit_report(report, args, manifest)
    return 0


def _cmd_eval_mot(args) -> int:
    manifest = _ManifestWriter("eval-mot", _manifest_settings(args))
    rows = parse_tracks(args.tracks)
    manifest.add_input(args.tracks)
    annotations = parse_annotations(args.gt)
    manifest.add_input(args.gt)
    report = eval_tracking(rows, tracking_ground_truth(annotations), EvalConfig.tracking())
    _emit_report(report, args, manifest)
    return 0


# --- anchors report ------------------------------------------------------------


def _anchor_config_from_args(args) -> AnchorConfig:
    if args.anchor_config:
        raw = json.loads(Path(args.anchor_config).read_text(encoding="utf-8"))
        fields = {k: tuple(v) for k, v in raw.items()}
        return AnchorConfig(**fields)
    return dense_config() if args.preset == "dense" else baseline_config()


def _cmd_anchors_report(args) -> int:
    manifest = _ManifestWriter("anchors report", _manifest_settings(args))
    config = _anchor_config_from_args(args)
    if args.anchor_config:
        manifest.add_input(args.anchor_config)
    annotations = parse_annotations(args.gt)
    manifest.add_input(args.gt)
    ground_truth, _ = detection_ground_truth(annotations)
    boxes = [g.box for g in ground_truth]
    width, height = _parse_image_size(args.image_size)
    stats = coverage_report(config, boxes, (width, height), pos_iou=args.pos_iou)
    low, high = scale_range(config)

    if args.format == "json":
        payload = stats.to_dict()
        payload["preset"] = args.preset if not args.anchor_config else "custom"
        payload["anchor_side_range"] = [low, high]
        body = json.dumps(payload, indent=2) + "\n"
    else:
        lines = [
            f"Anchor coverage (pos IoU {stats.pos_iou:.2f}, "
            f"{'custom config' if args.anchor_config else args.preset + ' preset'})",
            f"  anchor sides span [{low:.2f}, {high:.2f}] px",
            f"  {'size bucket':<12} {'gt':>6} {'covered':>8} {'fraction':>9}",
        ]
        for entry in stats.buckets:
            lines.append(
                f"  {entry['bucket']:<12} {entry['total']:>6} {entry['covered']:>8} "
                f"{entry['fraction']:>9.4f}"
            )
        lines.append(f"  {'overall':<12} {'':>6} {'':>8} {stats.overall_fraction:>9.4f}")
        body = "\n".join(lines) + "\n"

    if args.output:
        Path(args.output).write_text(body, encoding="utf-8")
        manifest.add_output(args.output)
        manifest.write(args.output)
    else:
        sys.stdout.write(body)
    return 0


# --- synth ---------------------------------------------------------------------


def _cmd_synth(args) -> int:
    manifest = _ManifestWriter("synth", _manifest_settings(args))
    width, height = _parse_image_size(args.image_size)
    occlusions = []
    for window in args.occlusion or ():
        parts = window.split(":")
        if len(parts) != 3:
            raise ValueError(f"--occlusion expects identity:first:last, got {window!r}")
        occlusions.append(tuple(int(p) for p in parts))
    categories = tuple(int(c) for c in args.classes.split(",")) if args.classes else (4,)

    config = SynthConfig(
        seed=args.seed,
        num_identities=args.identities,
        frames=args.frames,
        image_width=width,
        image_height=height,
        detection_noise=args.noise,
        miss_probability=args.miss_prob,
        occlusions=tuple(occlusions),
        embedding_dim=args.embedding_dim,
        intra_radius=args.intra_radius,
        inter_distance_min=args.inter_distance,
        categories=categories,
        confidence_range=(args.min_confidence, args.max_confidence),
    )
    result = generate(config)

    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    gt_path = out_dir / "gt.txt"
    det_path = out_dir / "detections.txt"
    emb_path = out_dir / "embeddings.emb"
    write_annotations(result.ground_truth, gt_path)
    write_detections(result.detections, det_path)
    write_embeddings(result.embeddings, emb_path)
    for path in (gt_path, det_path, emb_path):
        manifest.add_output(path)
    manifest.write(out_dir)
    return 0


# --- wiring --------------------------------------------------------------------


def _parse_image_size(text: str) -> tuple[int, int]:
    try:
        width, _, height = text.partition("x")
        return int(width), int(height)
    except ValueError:
        raise ValueError(f"image size must look like 1920x1080, got {text!r}") from None


def _manifest_settings(args, params=None) -> dict:
    skip = {"func"}
    settings = {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in skip and value is not None
    }
    if params is not None:
        settings["tracker_params"] = json.loads(
            json.dumps(dataclasses.asdict(params))
        )
    return settings


def _add_prefilter_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--pre-nms",
        action="store_true",
        help="apply score threshold, top-k, and class-wise NMS to the raw detections first",
    )
    parser.add_argument("--score-thresh", type=float, default=SCORE_THRESH)
    parser.add_argument("--topk-per-level", type=int, default=TOPK_PER_LEVEL)
    parser.add_argument("--nms-iou", type=float, default=NMS_IOU)
    parser.add_argument("--max-dets", type=int, default=MAX_DETECTIONS)


def _add_report_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--output", help="write the report here instead of stdout")
    parser.add_argument("--format", choices=("text", "json"), default="text")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dronetrack",
        description="Multi-object tracking-by-detection and evaluation for drone video",
    )
    parser.add_argument("--version", action="version", version=f"dronetrack {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_track = sub.add_parser("track", help="run the tracker over detections + embeddings")
    p_track.add_argument("--detections", required=True, help="detection file, or directory of sequences")
    p_track.add_argument("--embeddings", help="embedding file, or directory matching --detections")
    p_track.add_argument("--config", help="tracker configuration file (key = value lines)")
    p_track.add_argument("--output", required=True, help="output file, or directory in directory mode")
    p_track.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override one configuration key (repeatable; wins over --config)",
    )
    p_track.add_argument("--jobs", type=int, default=1, help="parallel sequences in directory mode")
    _add_prefilter_flags(p_track)
    p_track.set_defaults(func=_cmd_track)

    p_evald = sub.add_parser("eval-det", help="COCO-style AP/AR for detections")
    p_evald.add_argument("--detections", required=True, help="predicted detections file")
    p_evald.add_argument("--gt", required=True, help="annotation file")
    _add_prefilter_flags(p_evald)
    _add_report_flags(p_evald)
    p_evald.set_defaults(func=_cmd_eval_det)

    p_evalm = sub.add_parser("eval-mot", help="tracklet-AP for tracker output")
    p_evalm.add_argument("--tracks", required=True, help="tracker output file")
    p_evalm.add_argument("--gt", required=True, help="annotation file")
    _add_report_flags(p_evalm)
    p_evalm.set_defaults(func=_cmd_eval_mot)

    p_anchors = sub.add_parser("anchors", help="anchor design tools")
    anchors_sub = p_anchors.add_subparsers(dest="anchors_command", required=True)
    p_report = anchors_sub.add_parser("report", help="coverage of ground truth by anchor preset")
    p_report.add_argument("--preset", choices=("baseline", "dense"), default="baseline")
    p_report.add_argument("--anchor-config", help="JSON file overriding the preset")
    p_report.add_argument("--gt", required=True, help="annotation file with ground-truth boxes")
    p_report.add_argument("--image-size", default="1920x1080", help="WxH in pixels")
    p_report.add_argument("--pos-iou", type=float, default=0.5)
    _add_report_flags(p_report)
    p_report.set_defaults(func=_cmd_anchors_report)

    p_synth = sub.add_parser("synth", help="generate a synthetic sequence")
    p_synth.add_argument("--output", required=True, help="directory for gt.txt, detections.txt, embeddings.emb")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--identities", type=int, default=5)
    p_synth.add_argument("--frames", type=int, default=100)
    p_synth.add_argument("--image-size", default="1920x1080")
    p_synth.add_argument("--noise", type=float, default=0.0, help="detection noise std in pixels")
    p_synth.add_argument("--miss-prob", type=float, default=0.0)
    p_synth.add_argument(
        "--occlusion",
        action="append",
        metavar="ID:FIRST:LAST",
        help="drop detections of one identity over an inclusive frame range (repeatable)",
    )
    p_synth.add_argument("--embedding-dim", type=int, default=16)
    p_synth.add_argument("--intra-radius", type=float, default=0.05)
    p_synth.add_argument("--inter-distance", type=float, default=0.8)
    p_synth.add_argument("--classes", help="comma-separated class ids cycled over identities")
    p_synth.add_argument("--min-confidence", type=float, default=1.0)
    p_synth.add_argument("--max-confidence", type=float, default=1.0)
    p_synth.set_defaults(func=_cmd_synth)

    return parser


def dispatch(argv) -> int:
    """Run one CLI invocation; returns the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, OSError, AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))
