"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error (bad files, failed
validation). Every command that draws random numbers takes --seed, and
identical inputs plus seed produce byte-identical output files.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .bench import BenchReport, StrategyReport, bench_decode, compare_strategies
from .categories import CategoryTable, default_table, load_category_table
from .decode import DecodeConfig, decode_scene
from .encode import EncodeParams, encode_scene
from .fileio import read_detections, read_scenes, read_tensors, write_detections, write_scenes, write_tensors
from .metrics import (
    VISIBLE_AND_OCCLUDED,
    VISIBLE_ONLY,
    EvalConfig,
    MetricReport,
    evaluate,
    report_to_csv_rows,
    report_to_dict,
)
from .postprocess import FusionConfig, flip_tensors, fuse_tensors, nms, rescale_detections
from .scene import Detection, Scene, mirror_scene, scale_scene
from .synth import NoiseParams, SynthParams, synth_scenes

_MODES = {"visible": VISIBLE_ONLY, "all": VISIBLE_AND_OCCLUDED}


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits 1 on usage errors instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_table(args) -> CategoryTable:
    if getattr(args, "categories", None):
        return load_category_table(Path(args.categories).read_text("utf-8"))
    return default_table()


def _scale_tag(scale: float) -> str:
    return f"@s{scale:g}"


def _view_name(image_id: str, scale: float, flipped: bool) -> str:
    name = image_id
    if scale != 1.0:
        name += _scale_tag(scale)
    if flipped:
        name += "@flip"
    return name + ".dmrk"


def _parse_scales(text: str) -> tuple[float, ...]:
    try:
        scales = tuple(float(tok) for tok in text.split(",") if tok)
    except ValueError:
        raise ValueError(f"--scales must be a comma list of numbers, got {text!r}")
    if not scales or any(s <= 0 for s in scales):
        raise ValueError(f"--scales must be positive, got {text!r}")
    return scales


def _cmd_synth(args) -> int:
    table = _load_table(args)
    params = SynthParams(
        seed=args.seed,
        num_images=args.images,
        image_width=args.width,
        image_height=args.height,
        min_objects=args.min_objects,
        max_objects=args.max_objects,
        min_box_size=args.min_box,
        max_box_size=args.max_box,
        keypoint_scatter=args.scatter,
        occlusion_prob=args.occlusion,
        unlabeled_prob=args.unlabeled,
        min_visible=args.min_visible,
        separation=not args.no_separation,
    )
    scenes = synth_scenes(params, table)
    write_scenes(args.out, scenes)
    print(f"wrote {len(scenes)} scenes to {args.out}")
    return 0


def _cmd_encode(args) -> int:
    table = _load_table(args)
    scenes = read_scenes(args.scenes, table)
    params = EncodeParams(stride=args.stride, min_overlap=args.min_overlap)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scales = _parse_scales(args.scales)
    written = 0
    for scene in scenes:
        for scale in scales:
            view = scene if scale == 1.0 else scale_scene(scene, scale)
            for flipped in (False, True) if args.flip else (False,):
                final = mirror_scene(view, table) if flipped else view
                write_tensors(out_dir / _view_name(scene.image_id, scale, flipped), encode_scene(final, table, params))
                written += 1
    print(f"wrote {written} tensor files to {out_dir}")
    return 0


def _decode_one(
    image_id: str,
    tensor_dir: Path,
    table: CategoryTable,
    config: DecodeConfig,
    scales: tuple[float, ...],
    flip: bool,
    nms_iou: float | None,
) -> list[Detection]:
    per_scale = []
    for scale in scales:
        tensors = read_tensors(tensor_dir / _view_name(image_id, scale, False))
        if flip:
            other = flip_tensors(read_tensors(tensor_dir / _view_name(image_id, scale, True)), table)
            tensors = fuse_tensors([tensors, other])
        per_scale.append(rescale_detections(decode_scene(tensors, table, config), scale))
    merged = [det for dets in per_scale for det in dets]
    merged.sort(key=lambda d: -d.score)
    if nms_iou is not None:
        merged = nms(merged, nms_iou)
    return merged


def _cmd_decode(args) -> int:
    table = _load_table(args)
    config = DecodeConfig(
        top_k=args.topk,
        min_center_score=args.min_score,
        min_kp_candidate_score=args.kp_min_score,
        snap_box_margin=args.snap_margin,
    )
    tensor_dir = Path(args.tensors)
    ids = sorted(p.stem for p in tensor_dir.glob("*.dmrk") if "@" not in p.stem)
    if not ids:
        raise ValueError(f"no base .dmrk files found in {tensor_dir}")
    scales = _parse_scales(args.scales)
    nms_iou = None if args.no_nms else args.nms_iou

    def work(image_id: str) -> list[Detection]:
        return _decode_one(image_id, tensor_dir, table, config, scales, args.flip, nms_iou)

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = dict(zip(ids, pool.map(work, ids)))
    else:
        results = {image_id: work(image_id) for image_id in ids}
    write_detections(args.out, results)
    total = sum(len(v) for v in results.values())
    print(f"decoded {total} detections over {len(ids)} images to {args.out}")
    return 0


def _cmd_fuse(args) -> int:
    table = _load_table(args)
    sets = [read_tensors(path) for path in args.inputs]
    unflip = {int(tok) for tok in args.unflip.split(",") if tok} if args.unflip else set()
    bad = [i for i in unflip if not 0 <= i < len(sets)]
    if bad:
        raise ValueError(f"--unflip indices {bad} out of range for {len(sets)} inputs")
    sets = [flip_tensors(t, table) if i in unflip else t for i, t in enumerate(sets)]
    weights = [float(tok) for tok in args.weights.split(",")] if args.weights else None
    write_tensors(args.out, fuse_tensors(sets, weights))
    print(f"fused {len(sets)} tensor sets to {args.out}")
    return 0


def _print_report(report: MetricReport, mode: str | None) -> None:
    def fmt(v: float | None) -> str:
        return "n/a" if v is None else f"{v:.3f}"

    print(f"images {report.images}  gt_items {report.gt_items}  detections {report.detections}")
    print(f"mAP_box = {fmt(report.box.map)}  (AP50 {fmt(report.box.map_50)}, AP75 {fmt(report.box.map_75)})")
    for name, block in report.pt.items():
        label = "mAP_pt" if mode else f"mAP_pt[{name}]"
        print(f"{label} = {fmt(block.map)}  (AP50 {fmt(block.map_50)}, AP75 {fmt(block.map_75)})")


def _write_pr_outputs(report: MetricReport, plot_dir: Path, mode: str | None) -> None:
    plot_dir.mkdir(parents=True, exist_ok=True)
    with open(plot_dir / "pr_curves.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "category_id", "threshold", "recall", "precision"])
        for curve in report.curves:
            label = "pt" if mode and curve.metric.startswith("pt") else curve.metric
            for r, p in zip(curve.recall, curve.precision):
                writer.writerow([label, curve.category_id, f"{curve.threshold:.2f}", f"{r:.4f}", f"{p:.6f}"])
    half = [c for c in report.curves if abs(c.threshold - 0.5) < 1e-9]
    series = []
    palette = {"box": "#1f77b4", "pt": "#d62728"}
    for curve in half:
        kind = "box" if curve.metric == "box" else "pt"
        pts = list(zip(curve.recall.tolist(), curve.precision.tolist()))
        series.append((pts, palette[kind]))
    svg = _line_chart(series, x_label="recall", y_label="precision", title="PR at IoU/OKS 0.50")
    (plot_dir / "pr_curves.svg").write_text(svg, "utf-8")


def _cmd_eval(args) -> int:
    table = _load_table(args)
    scenes = read_scenes(args.scenes, table)
    detections = read_detections(args.detections)
    mode = _MODES[args.mode] if args.mode else None
    sigmas = None
    if args.sigmas:
        raw = json.loads(Path(args.sigmas).read_text("utf-8"))
        sigmas = np.asarray(raw, dtype=np.float64)
    config = EvalConfig(visibility_mode=mode, max_detections_per_image=args.maxdets, sigmas=sigmas)
    report = evaluate(detections, scenes, table, config)
    _print_report(report, mode)
    if args.out_json:
        Path(args.out_json).write_text(json.dumps(report_to_dict(report, mode), indent=2, sort_keys=True), "utf-8")
    if args.out_csv:
        with open(args.out_csv, "w", newline="") as fh:
            csv.writer(fh).writerows(report_to_csv_rows(report, mode))
    if args.plot:
        _write_pr_outputs(report, Path(args.plot), mode)
    return 0


def _cmd_bench(args) -> int:
    table = _load_table(args)
    params = SynthParams(seed=args.seed, num_images=args.images, image_width=args.width, image_height=args.height)
    tensor_sets = [encode_scene(s, table) for s in synth_scenes(params, table)]
    config = DecodeConfig(top_k=args.topk, min_center_score=args.min_score)
    fusion = FusionConfig(flip_enabled=True)
    report = bench_decode(
        tensor_sets, table, config,
        iterations=args.iterations, warmup=args.warmup, threads=args.workers, fusion=fusion,
    )
    _print_table(report.rows())
    print(f"images {report.images}  threads {report.threads}  iterations {report.iterations}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh).writerows(report.rows())
    return 0


def _cmd_roundtrip(args) -> int:
    table = _load_table(args)
    params = SynthParams(
        seed=args.seed,
        num_images=args.images,
        image_width=args.width,
        image_height=args.height,
        occlusion_prob=args.occlusion,
        min_visible=1 if args.occlusion > 0 else 0,
    )
    scenes = synth_scenes(params, table)
    start = time.perf_counter()
    detections = {s.image_id: decode_scene(encode_scene(s, table), table) for s in scenes}
    elapsed = time.perf_counter() - start
    report = evaluate(detections, scenes, table, EvalConfig())
    _print_report(report, None)
    pt_maps = [b.map for b in report.pt.values() if b.map is not None]
    print(f"mAP_box = {report.box.map:.3f}" if report.box.map is not None else "mAP_box = n/a")
    print(f"mAP_pt = {min(pt_maps):.3f}" if pt_maps else "mAP_pt = n/a")
    print(f"encode+decode took {elapsed:.2f}s for {len(scenes)} images")
    return 0


def _cmd_strategies(args) -> int:
    table = _load_table(args)
    params = SynthParams(
        seed=args.seed,
        num_images=args.images,
        image_width=args.width,
        image_height=args.height,
        min_objects=args.min_objects,
        max_objects=args.max_objects,
        min_box_size=48,
        max_box_size=96,
        avoid_cell_boundaries=True,
    )
    if args.width % 4 or args.height % 4:
        raise ValueError("strategy comparison needs image dims divisible by 4 so the 0.75 scale stays integral")
    scenes = synth_scenes(params, table)
    noise = NoiseParams(seed=args.seed, dropout_prob=args.dropout, duplicate_prob=args.duplicates)
    report = compare_strategies(scenes, table, noise)
    _print_table(report.rows())
    if args.out:
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh).writerows(report.rows())
    if args.plot:
        _write_strategy_plot(report, Path(args.plot))
    return 0


def _print_table(rows: list[list[str]]) -> None:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    for row in rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())


def _write_strategy_plot(report: StrategyReport, plot_dir: Path) -> None:
    plot_dir.mkdir(parents=True, exist_ok=True)
    points = [(r.latency_ms, r.map_box, r.name) for r in report.results]
    svg = _scatter_chart(points, x_label="latency ms/image", y_label="mAP_box", title="Speed-accuracy trade-off")
    (plot_dir / "strategies.svg").write_text(svg, "utf-8")


_CHART_W, _CHART_H, _MARGIN = 640, 420, 56


def _chart_frame(title: str, x_label: str, y_label: str, x_ticks, y_ticks, to_px) -> list[str]:
    parts = [
        f'<rect x="0" y="0" width="{_CHART_W}" height="{_CHART_H}" fill="white"/>',
        f'<text x="{_CHART_W / 2}" y="24" text-anchor="middle" font-size="15">{title}</text>',
        f'<text x="{_CHART_W / 2}" y="{_CHART_H - 12}" text-anchor="middle" font-size="12">{x_label}</text>',
        f'<text x="16" y="{_CHART_H / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {_CHART_H / 2})">{y_label}</text>',
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_CHART_W - 2 * _MARGIN}" '
        f'height="{_CHART_H - 2 * _MARGIN}" fill="none" stroke="#333"/>',
    ]
    for tx in x_ticks:
        px, _ = to_px(tx, y_ticks[0])
        parts.append(f'<line x1="{px:.1f}" y1="{_CHART_H - _MARGIN}" x2="{px:.1f}" y2="{_CHART_H - _MARGIN + 5}" stroke="#333"/>')
        parts.append(f'<text x="{px:.1f}" y="{_CHART_H - _MARGIN + 18}" text-anchor="middle" font-size="10">{tx:g}</text>')
    for ty in y_ticks:
        _, py = to_px(x_ticks[0], ty)
        parts.append(f'<line x1="{_MARGIN - 5}" y1="{py:.1f}" x2="{_MARGIN}" y2="{py:.1f}" stroke="#333"/>')
        parts.append(f'<text x="{_MARGIN - 8}" y="{py + 3:.1f}" text-anchor="end" font-size="10">{ty:g}</text>')
    return parts


def _axis_mapper(x_lo, x_hi, y_lo, y_hi):
    span_x = (x_hi - x_lo) or 1.0
    span_y = (y_hi - y_lo) or 1.0

    def to_px(x, y):
        px = _MARGIN + (x - x_lo) / span_x * (_CHART_W - 2 * _MARGIN)
        py = _CHART_H - _MARGIN - (y - y_lo) / span_y * (_CHART_H - 2 * _MARGIN)
        return px, py

    return to_px


def _svg(parts: list[str]) -> str:
    body = "\n".join(parts)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_CHART_W}" height="{_CHART_H}" '
        f'viewBox="0 0 {_CHART_W} {_CHART_H}">\n{body}\n</svg>\n'
    )


def _line_chart(series: list[tuple[list[tuple[float, float]], str]], x_label: str, y_label: str, title: str) -> str:
    ticks = [0.0, 0.25, 0.5, 0.75, 1.0]
    to_px = _axis_mapper(0.0, 1.0, 0.0, 1.0)
    parts = _chart_frame(title, x_label, y_label, ticks, ticks, to_px)
    for points, color in series:
        if not points:
            continue
        path = " ".join(f"{to_px(x, y)[0]:.1f},{to_px(x, y)[1]:.1f}" for x, y in points)
        parts.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1" opacity="0.6"/>')
    return _svg(parts)


def _scatter_chart(points: list[tuple[float, float, str]], x_label: str, y_label: str, title: str) -> str:
    xs = [p[0] for p in points]
    x_hi = max(xs) * 1.15 or 1.0
    ticks_x = [round(x_hi * f, 2) for f in (0.0, 0.25, 0.5, 0.75, 1.0)]
    ticks_y = [0.0, 0.25, 0.5, 0.75, 1.0]
    to_px = _axis_mapper(0.0, x_hi, 0.0, 1.0)
    parts = _chart_frame(title, x_label, y_label, ticks_x, ticks_y, to_px)
    for x, y, name in points:
        px, py = to_px(x, y)
        parts.append(f'<circle cx="{px:.1f}" cy="{py:.1f}" r="4" fill="#1f77b4"/>')
        parts.append(f'<text x="{px + 6:.1f}" y="{py - 6:.1f}" font-size="10">{name}</text>')
    return _svg(parts)


def build_parser() -> _Parser:
    parser = _Parser(prog="clothdet", description="Clothing detection codec and evaluation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: _Parser, seed: bool = True) -> None:
        p.add_argument("--categories", help="category config JSON (defaults to the built-in 13-category table)")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synth", help="sample synthetic annotated scenes")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--images", type=int, default=16)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--min-objects", type=int, default=1)
    p.add_argument("--max-objects", type=int, default=6)
    p.add_argument("--min-box", type=int, default=64)
    p.add_argument("--max-box", type=int, default=160)
    p.add_argument("--scatter", type=float, default=512.0)
    p.add_argument("--occlusion", type=float, default=0.0)
    p.add_argument("--unlabeled", type=float, default=0.0)
    p.add_argument("--min-visible", type=int, default=0)
    p.add_argument("--no-separation", action="store_true")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("encode", help="render scenes into head tensor files")
    common(p, seed=False)
    p.add_argument("--scenes", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--min-overlap", type=float, default=0.7)
    p.add_argument("--flip", action="store_true", help="also write mirrored views")
    p.add_argument("--scales", default="1.0", help="comma list; extra views per scale")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("decode", help="decode tensor files into detections")
    common(p, seed=False)
    p.add_argument("--tensors", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--topk", type=int, default=100)
    p.add_argument("--min-score", type=float, default=0.0)
    p.add_argument("--kp-min-score", type=float, default=0.1)
    p.add_argument("--snap-margin", type=float, default=1.0)
    p.add_argument("--nms-iou", type=float, default=0.5)
    p.add_argument("--no-nms", action="store_true")
    p.add_argument("--flip", action="store_true", help="fuse each view with its mirrored file")
    p.add_argument("--scales", default="1.0")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("fuse", help="weighted-average tensor files")
    common(p, seed=False)
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--weights", help="comma list, one per input")
    p.add_argument("--unflip", help="comma list of input indices to mirror before fusing")
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("eval", help="score detections against scenes")
    common(p, seed=False)
    p.add_argument("--detections", required=True)
    p.add_argument("--scenes", required=True)
    p.add_argument("--mode", choices=sorted(_MODES))
    p.add_argument("--sigmas", help="JSON file with 294 per-landmark tolerances")
    p.add_argument("--maxdets", type=int, default=100)
    p.add_argument("--out-json")
    p.add_argument("--out-csv")
    p.add_argument("--plot", help="directory for PR curve CSV and SVG")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="time decode and post-processing stages")
    common(p)
    p.add_argument("--images", type=int, default=4)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--topk", type=int, default=100)
    p.add_argument("--min-score", type=float, default=0.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("roundtrip", help="synth, encode, decode, evaluate in one go")
    common(p)
    p.add_argument("--images", type=int, default=16)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--occlusion", type=float, default=0.0)
    p.set_defaults(func=_cmd_roundtrip)

    p = sub.add_parser("strategies", help="compare post-processing strategies on noisy views")
    common(p)
    p.add_argument("--images", type=int, default=24)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--min-objects", type=int, default=2)
    p.add_argument("--max-objects", type=int, default=4)
    p.add_argument("--dropout", type=float, default=0.18)
    p.add_argument("--duplicates", type=float, default=0.3)
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--plot", help="directory for the speed-accuracy SVG")
    p.set_defaults(func=_cmd_strategies)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
