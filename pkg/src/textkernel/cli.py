"""Command-line entry point.

Subcommands: labelgen, expand, roundtrip, bench, eval, context-demo.
Result artifacts (NPY maps, detections.json, report.json) are byte
reproducible for a fixed seed; wall-clock figures go to separate
timings/bench files since they can never be.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .expand import PostConfig
from .geometry import LabeledMask
from .harness import (
    NoiseConfig,
    bench_post,
    context_demo,
    evaluate,
    roundtrip_batch,
    run_expander,
)
from .labels import Scene, build_labels, distance_label
from .scenes import SceneConfig, gen_scene
from .serialize import dump_json, load_json, load_map, save_map


def _post_config(args, config: dict) -> PostConfig:
    cfg = PostConfig(**{k: v for k, v in config.get("post", {}).items() if k in PostConfig.__dataclass_fields__})
    overrides = {
        "kernel_threshold": args.kernel_thresh,
        "region_threshold": args.region_thresh,
        "distance_scale": args.scale,
        "min_kernel_area": getattr(args, "min_area", None),
        "score_threshold": getattr(args, "score_thresh", None),
    }
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    cfg.validate()
    return cfg


def _scene_config(args, config: dict) -> SceneConfig:
    cfg = SceneConfig.from_dict(config.get("scene", {}))
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    for key in ("height", "width"):
        v = getattr(args, key, None)
        if v is not None:
            cfg = replace(cfg, **{key: v})
    return cfg


def _load_config(args) -> dict:
    if getattr(args, "config", None):
        return load_json(args.config)
    return {}


def cmd_labelgen(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.from_ids:
        ids = load_map(args.from_ids)
        if ids.dtype != np.int32:
            raise SystemExit(f"--from-ids expects an int32 map, got {ids.dtype}")
        labeled = LabeledMask(ids, int(ids.max()))
        save_map(out_dir / "distance.npy", distance_label(labeled), "float32")
        return 0
    config = _load_config(args)
    scene_cfg = _scene_config(args, config)
    scene = gen_scene(scene_cfg)
    bundle = build_labels(scene)
    save_map(out_dir / "region.npy", bundle.region, "uint8")
    save_map(out_dir / "kernel.npy", bundle.kernel, "uint8")
    save_map(out_dir / "distance.npy", bundle.distance, "float32")
    save_map(out_dir / "ids.npy", bundle.instance_ids.labels, "int32")
    dump_json(scene.to_dict(), out_dir / "scene.json")
    return 0


def cmd_expand(args) -> int:
    in_dir = Path(args.in_dir)
    kernel = load_map(in_dir / "kernel.npy").astype(np.float64)
    region = load_map(in_dir / "region.npy").astype(np.float64)
    distance_path = in_dir / "distance.npy"
    distance = load_map(distance_path).astype(np.float64) if distance_path.exists() else None
    if args.method == "bg" and distance is None:
        raise SystemExit(f"method bg needs {distance_path}")

    config = _load_config(args)
    cfg = _post_config(args, config)
    fixed_delta = args.fixed_delta
    if args.method == "fixed" and fixed_delta is None:
        raise SystemExit("method fixed needs --fixed-delta")
    result = run_expander(args.method, kernel, region, distance, cfg, fixed_delta, args.threads)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    detections = result.to_dict()
    detections["method"] = args.method
    detections["config"] = cfg.to_dict()
    dump_json(detections, out_dir / "detections.json")
    dump_json(
        {
            "method": args.method,
            "model_ms": result.model_ms,
            "post_ms": result.post_ms,
            "decision_pixel_touches": result.decision_pixel_touches,
        },
        out_dir / "timings.json",
    )
    return 0


def cmd_roundtrip(args) -> int:
    config = _load_config(args)
    scene_cfg = _scene_config(args, config)
    post_cfg = _post_config(args, config)
    noise = None
    if "noise" in config:
        noise = NoiseConfig(**{k: v for k, v in config["noise"].items() if k in NoiseConfig.__dataclass_fields__})
    summary = roundtrip_batch(
        scene_cfg,
        args.scenes,
        method=args.method,
        seed0=scene_cfg.seed,
        jobs=args.jobs,
        post_cfg=post_cfg,
        noise=noise,
        fixed_delta=args.fixed_delta,
        fixed_delta_factor=args.fixed_delta_factor,
        iou_threshold=args.iou,
        threads=args.threads,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings = summary.pop("timings_ms")
    summary["scene_config"] = scene_cfg.to_dict()
    summary["post_config"] = post_cfg.to_dict()
    dump_json(summary, out_dir / "report.json")
    dump_json(timings, out_dir / "timings.json")
    print(
        f"{summary['method']}: F={summary['f_measure']:.4f} "
        f"P={summary['precision']:.4f} R={summary['recall']:.4f} "
        f"meanIoU={summary['mean_matched_iou']:.4f} over {args.scenes} scenes"
    )
    return 0


def cmd_bench(args) -> int:
    table = bench_post(
        map_size=args.size,
        instance_scale=args.instance_scale,
        methods=tuple(args.methods.split(",")),
        runs=args.runs,
        warmups=args.warmups,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_json(table, out_dir / "bench.json")
    for method, row in table["methods"].items():
        print(f"{method}: median post {row['median_post_ms']:.2f} ms, touches {row['decision_pixel_touches']}")
    return 0


def cmd_eval(args) -> int:
    pred_doc = load_json(args.pred)
    gt = Scene.from_dict(load_json(args.gt))
    from .expand import Detection, DetectionResult
    from .geometry import Polygon

    dets = DetectionResult(
        [Detection(Polygon.from_dict(d), float(d.get("score", 1.0))) for d in pred_doc["instances"]]
    )
    report = evaluate(dets, gt, args.iou)
    dump_json(report.to_dict(), args.out)
    print(f"P={report.precision:.4f} R={report.recall:.4f} F={report.f_measure:.4f}")
    return 0


def cmd_context_demo(args) -> int:
    config = _load_config(args)
    if "scene" in config:
        scene_cfg = _scene_config(args, config)
    else:
        # demo canvases are small; pick instance sizes that actually fit
        side = min(args.height, args.width)
        scene_cfg = SceneConfig(
            height=args.height,
            width=args.width,
            count_min=2,
            count_max=4,
            size_min=0.18 * side,
            size_max=0.40 * side,
            margin=4,
            seed=args.seed,
        )
    info = context_demo(args.weights, scene_cfg, args.out_dir)
    dump_json(info, Path(args.out_dir) / "demo_summary.json")
    print(f"relation {info['relation_shape']}, enhanced {info['enhanced_shape']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="textkernel")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("labelgen", help="generate label maps for a synthetic scene")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", help="JSON config with scene/post/noise sections")
    p.add_argument("--seed", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--from-ids", help="int32 instance-id NPY; write only its distance map")
    p.set_defaults(func=cmd_labelgen)

    p = sub.add_parser("expand", help="run an expander on kernel/distance/region NPY maps")
    p.add_argument("--in-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--method", choices=("bg", "pa", "fixed"), default="bg")
    p.add_argument("--kernel-thresh", type=float)
    p.add_argument("--region-thresh", type=float)
    p.add_argument("--fixed-delta", type=float)
    p.add_argument("--scale", type=float)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--min-area", type=float)
    p.add_argument("--score-thresh", type=float)
    p.add_argument("--config")
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("roundtrip", help="scene -> labels -> expansion -> evaluation")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--scenes", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=("bg", "pa", "fixed"), default="bg")
    p.add_argument("--fixed-delta", type=float)
    p.add_argument("--fixed-delta-factor", type=float)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--threads", type=int, default=1, help="per-instance expansion threads")
    p.add_argument("--jobs", type=int, default=1, help="scenes processed in parallel")
    p.add_argument("--kernel-thresh", type=float)
    p.add_argument("--region-thresh", type=float)
    p.add_argument("--scale", type=float)
    p.add_argument("--config")
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("bench", help="time post-processing methods on one big map")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--size", type=int, default=1024)
    p.add_argument("--instance-scale", type=float)
    p.add_argument("--methods", default="bg,pa")
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--warmups", type=int, default=3)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", help="score detections.json against scene.json")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("context-demo", help="run the context pipeline on stand-in inputs")
    p.add_argument("--weights", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=int, default=96)
    p.add_argument("--width", type=int, default=96)
    p.add_argument("--config")
    p.set_defaults(func=cmd_context_demo)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
