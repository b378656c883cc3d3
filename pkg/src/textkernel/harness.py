"""End-to-end harness: detection evaluation, the label round-trip pipeline,
post-processing benchmarks, and the context-pipeline demo.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .expand import (
    DetectionResult,
    PostConfig,
    boundary_guided_expand,
    fixed_offset_expand,
    pixel_aggregation_expand,
)
from .geometry import mask_iou, rasterize
from .labels import LabelBundle, Scene, build_labels, shrink_offset
from .scenes import SceneConfig, gen_scene


@dataclass
class EvalReport:
    precision: float
    recall: float
    f_measure: float
    matches: list  # (pred_index, gt_index, iou) triples, one per matched gt
    iou_threshold: float
    n_pred: int
    n_gt: int
    timings_ms: dict = field(default_factory=dict)

    @property
    def mean_matched_iou(self) -> float:
        if not self.matches:
            return 0.0
        return float(np.mean([m[2] for m in self.matches]))

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f_measure": self.f_measure,
            "iou_threshold": self.iou_threshold,
            "n_pred": self.n_pred,
            "n_gt": self.n_gt,
            "matches": [[int(p), int(g), float(v)] for p, g, v in self.matches],
            "mean_matched_iou": self.mean_matched_iou,
        }


def _safe_div(a: float, b: float) -> float:
    return a / b if b else 0.0


def evaluate(pred: DetectionResult, gt: Scene, iou_threshold: float = 0.5) -> EvalReport:
    """Greedy one-to-one matching of predictions to ground truth by mask IoU.

    Pairs are taken in descending IoU order (ties broken by indices), each
    prediction and each ground-truth instance used at most once; a pair
    counts as a true positive at or above the threshold.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError("iou_threshold must lie in (0, 1]")
    gt_masks = [rasterize(p, gt.height, gt.width) for p in gt.instances]
    pred_masks = [rasterize(d.polygon, gt.height, gt.width) for d in pred.instances]

    pairs = []
    for pi, pm in enumerate(pred_masks):
        for gi, gm in enumerate(gt_masks):
            iou = mask_iou(pm, gm)
            if iou >= iou_threshold:
                pairs.append((iou, pi, gi))
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))

    used_pred, used_gt = set(), set()
    matches = []
    for iou, pi, gi in pairs:
        if pi in used_pred or gi in used_gt:
            continue
        used_pred.add(pi)
        used_gt.add(gi)
        matches.append((pi, gi, iou))

    tp = len(matches)
    precision = _safe_div(tp, len(pred_masks))
    recall = _safe_div(tp, len(gt_masks))
    f = _safe_div(2 * precision * recall, precision + recall)
    return EvalReport(precision, recall, f, matches, iou_threshold, len(pred_masks), len(gt_masks))


@dataclass
class NoiseConfig:
    """Optional corruption of the perfect label maps before expansion."""

    prob_sigma: float = 0.0  # gaussian noise on the probability maps
    distance_jitter: float = 0.0  # multiplicative +-fraction on the distance map
    seed: int = 0

    def active(self) -> bool:
        return self.prob_sigma > 0 or self.distance_jitter > 0


def maps_from_labels(bundle: LabelBundle, noise: NoiseConfig | None = None):
    """Turn ground-truth labels into the float maps an expander consumes."""
    kernel_prob = bundle.kernel.astype(np.float64)
    region_prob = bundle.region.astype(np.float64)
    distance = bundle.distance.copy()
    if noise is not None and noise.active():
        rng = np.random.default_rng(noise.seed)
        if noise.prob_sigma > 0:
            kernel_prob = np.clip(kernel_prob + rng.normal(0, noise.prob_sigma, kernel_prob.shape), 0, 1)
            region_prob = np.clip(region_prob + rng.normal(0, noise.prob_sigma, region_prob.shape), 0, 1)
        if noise.distance_jitter > 0:
            j = noise.distance_jitter
            distance = distance * rng.uniform(1 - j, 1 + j, distance.shape)
    return kernel_prob, region_prob, distance


def true_mean_offset(scene: Scene) -> float:
    """Mean inward shrink offset over a scene's instances; the 'right' value
    a fixed-offset expander would need."""
    if not scene.instances:
        return 0.0
    return float(np.mean([shrink_offset(p, scene.shrink_ratio) for p in scene.instances]))


def run_expander(
    method: str,
    kernel_prob,
    region_prob,
    distance,
    cfg: PostConfig,
    fixed_delta: float | None = None,
    threads: int = 1,
) -> DetectionResult:
    if method == "bg":
        return boundary_guided_expand(kernel_prob, distance, region_prob, cfg, threads=threads)
    if method == "pa":
        return pixel_aggregation_expand(kernel_prob, region_prob, cfg)
    if method == "fixed":
        if fixed_delta is None:
            raise ValueError("fixed method needs fixed_delta")
        return fixed_offset_expand(kernel_prob, region_prob, fixed_delta, cfg, threads=threads)
    raise ValueError(f"unknown expansion method {method!r}")


def roundtrip(
    scene_cfg: SceneConfig,
    method: str = "bg",
    post_cfg: PostConfig | None = None,
    noise: NoiseConfig | None = None,
    fixed_delta: float | None = None,
    fixed_delta_factor: float | None = None,
    iou_threshold: float = 0.5,
    threads: int = 1,
) -> EvalReport:
    """Scene -> labels -> expansion on the label maps -> evaluation.

    `fixed_delta_factor` scales the scene's true mean shrink offset, which
    is how a deliberately misestimated fixed offset is constructed.
    """
    post_cfg = post_cfg or PostConfig()
    t0 = time.perf_counter()
    scene = gen_scene(scene_cfg)
    t1 = time.perf_counter()
    bundle = build_labels(scene)
    t2 = time.perf_counter()
    if noise is not None and noise.active():
        noise = replace(noise, seed=noise.seed + scene_cfg.seed)
    kernel_prob, region_prob, distance = maps_from_labels(bundle, noise)
    if method == "fixed" and fixed_delta is None:
        fixed_delta = true_mean_offset(scene) * (fixed_delta_factor or 1.0)
    result = run_expander(method, kernel_prob, region_prob, distance, post_cfg, fixed_delta, threads)
    t3 = time.perf_counter()
    report = evaluate(result, scene, iou_threshold)
    t4 = time.perf_counter()
    report.timings_ms = {
        "scene_ms": (t1 - t0) * 1e3,
        "labels_ms": (t2 - t1) * 1e3,
        "post_ms": result.post_ms,
        "eval_ms": (t4 - t3) * 1e3,
    }
    return report


def roundtrip_batch(
    base_cfg: SceneConfig,
    n_scenes: int,
    method: str = "bg",
    seed0: int = 0,
    jobs: int = 1,
    **kwargs,
) -> dict:
    """Aggregate round-trip stats over seeds seed0..seed0+n-1.

    F-measure is micro-averaged (pooled TP / pred / gt counts) so a single
    dropped instance anywhere shows up. Scenes are independent, so jobs > 1
    processes them in a thread pool; reports are merged in seed order and
    the aggregate never depends on the job count.
    """
    configs = [replace(base_cfg, seed=seed0 + i) for i in range(n_scenes)]
    if jobs > 1 and n_scenes > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(lambda cfg: roundtrip(cfg, method, **kwargs), configs))
    else:
        reports = [roundtrip(cfg, method, **kwargs) for cfg in configs]

    tp = n_pred = n_gt = 0
    ious: list[float] = []
    per_scene_f = []
    timings = {"scene_ms": 0.0, "labels_ms": 0.0, "post_ms": 0.0, "eval_ms": 0.0}
    for rep in reports:
        tp += len(rep.matches)
        n_pred += rep.n_pred
        n_gt += rep.n_gt
        ious.extend(m[2] for m in rep.matches)
        per_scene_f.append(rep.f_measure)
        for k in timings:
            timings[k] += rep.timings_ms.get(k, 0.0)
    precision = _safe_div(tp, n_pred)
    recall = _safe_div(tp, n_gt)
    return {
        "method": method,
        "scenes": n_scenes,
        "precision": precision,
        "recall": recall,
        "f_measure": _safe_div(2 * precision * recall, precision + recall),
        "mean_scene_f": float(np.mean(per_scene_f)) if per_scene_f else 0.0,
        "mean_matched_iou": float(np.mean(ious)) if ious else 0.0,
        "matched": tp,
        "n_pred": n_pred,
        "n_gt": n_gt,
        "timings_ms": timings,
    }


def _bench_rect(cx, cy, length, half_w, angle) -> "Polygon":
    from .geometry import Polygon

    ux, uy = np.cos(angle), np.sin(angle)
    vx, vy = -uy, ux
    hl = length / 2.0
    return Polygon(
        np.array(
            [
                [cx - hl * ux - half_w * vx, cy - hl * uy - half_w * vy],
                [cx + hl * ux - half_w * vx, cy + hl * uy - half_w * vy],
                [cx + hl * ux + half_w * vx, cy + hl * uy + half_w * vy],
                [cx - hl * ux + half_w * vx, cy - hl * uy + half_w * vy],
            ]
        )
    ).ccw()


def _bench_band(cx, cy, chord, half_w, angle, samples: int = 13) -> "Polygon":
    from .geometry import Polygon

    ux, uy = np.cos(angle), np.sin(angle)
    px, py = -uy, ux
    bulge = 0.15 * chord
    a = np.array([cx - ux * chord / 2, cy - uy * chord / 2])
    b = np.array([cx + ux * chord / 2, cy + uy * chord / 2])
    ctrl = np.array([cx + px * bulge, cy + py * bulge])
    t = np.linspace(0.0, 1.0, samples)[:, None]
    path = (1 - t) ** 2 * a + 2 * t * (1 - t) * ctrl + t**2 * b
    vel = 2 * (1 - t) * (ctrl - a) + 2 * t * (b - ctrl)
    norm = np.hypot(vel[:, 0], vel[:, 1])[:, None]
    normal = np.column_stack([-vel[:, 1], vel[:, 0]]) / norm
    return Polygon(np.vstack([path + normal * half_w, (path - normal * half_w)[::-1]])).ccw()


# fractional slot centers and orientations for the packed benchmark layout
_BENCH_SLOTS = [
    (0.26, 0.25, 0.00),
    (0.74, 0.26, 0.50),
    (0.50, 0.52, 0.26),
    (0.26, 0.76, 2.70),
    (0.75, 0.75, 1.06),
]


def _bench_scene(map_size: int, instance_scale: float, count: int) -> Scene:
    """Deterministic packed layout: alternating bands and rectangles.

    A fixed layout (rather than rejection sampling) guarantees the instance
    count and per-instance coverage the speed comparison depends on.
    """
    polys = []
    for i in range(count):
        fx, fy, ang = _BENCH_SLOTS[i % len(_BENCH_SLOTS)]
        tile = i // len(_BENCH_SLOTS)
        cx = (fx + 0.013 * tile) * map_size
        cy = (fy + 0.017 * tile) * map_size
        half_w = instance_scale / 6.0
        if i % 2 == 0:
            polys.append(_bench_rect(cx, cy, instance_scale, half_w, ang))
        else:
            polys.append(_bench_band(cx, cy, instance_scale, half_w, ang))
    return Scene(height=map_size, width=map_size, instances=polys, shrink_ratio=0.5)


def bench_post(
    map_size: int = 1024,
    instance_scale: float | None = None,
    methods: tuple = ("bg", "pa"),
    count: int = 5,
    runs: int = 20,
    warmups: int = 3,
    post_cfg: PostConfig | None = None,
) -> dict:
    """Time the post-processing step alone on one synthetic map.

    Single-threaded, median over `runs` after `warmups`; reports per-method
    wall time and the decision-step pixel-touch counters alongside the scene
    geometry (total region area, total contour perimeter) the counters are
    expected to track.
    """
    if map_size < 256:
        raise ValueError("benchmark maps start at 256 px")
    if instance_scale is None:
        # instances of length ~0.42*s and width ~s/6 each cover >= 5% of the canvas
        instance_scale = map_size * 0.42
    post_cfg = post_cfg or PostConfig()
    scene = _bench_scene(map_size, instance_scale, count)
    bundle = build_labels(scene)
    kernel_prob, region_prob, distance = maps_from_labels(bundle)
    fixed_delta = true_mean_offset(scene)

    region_area = int(bundle.region.sum())
    kernel_perimeter = 0.0
    from .geometry import connected_components, extract_contour  # local to keep import cycle-free

    comps = connected_components(bundle.kernel)
    for idx in range(1, comps.count + 1):
        kernel_perimeter += extract_contour(comps.component(idx)).perimeter()

    table = {
        "map_size": map_size,
        "instances": len(scene.instances),
        "instance_scale": instance_scale,
        "region_area_px": region_area,
        "kernel_contour_px": kernel_perimeter,
        "runs": runs,
        "warmups": warmups,
        "methods": {},
    }
    for method in methods:
        times = []
        touches = None
        for i in range(warmups + runs):
            res = run_expander(method, kernel_prob, region_prob, distance, post_cfg, fixed_delta, threads=1)
            if i >= warmups:
                times.append(res.post_ms)
            touches = res.decision_pixel_touches
        table["methods"][method] = {
            "median_post_ms": statistics.median(times),
            "min_post_ms": min(times),
            "decision_pixel_touches": touches,
            "detections": len(res.instances),
        }
    return table


def context_demo(weights_dir, scene_cfg: SceneConfig, out_dir) -> dict:
    """Run the context pipeline on label-derived stand-in inputs and dump
    every intermediate as NPY plus a PNG heatmap. Deterministic."""
    from pathlib import Path

    from PIL import Image
    from matplotlib import colormaps

    from .context import enhance, load_weight_bundle
    from .serialize import save_map

    w = load_weight_bundle(weights_dir)
    scene = gen_scene(scene_cfg)
    bundle = build_labels(scene)
    h, wid = scene.height, scene.width

    region = bundle.region.astype(np.float64)
    kernel = bundle.kernel.astype(np.float64)
    dist = bundle.distance
    dist_norm = dist / max(dist.max(), 1.0)
    yy, xx = np.mgrid[0:h, 0:wid]
    features = np.stack([region, kernel, dist_norm, xx / max(wid - 1, 1), yy / max(h - 1, 1)])
    seg = np.stack([region, kernel])
    dist_logits = np.stack([dist, dist * 0.5])

    out = enhance(features, seg, dist_logits, w)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cmap = colormaps["viridis"]

    def dump(name, array):
        save_map(out_dir / f"{name}.npy", array, "float32")
        img = np.asarray(array, dtype=np.float64)
        if img.ndim == 3:
            img = img[0]
        lo, hi = img.min(), img.max()
        norm = (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)
        rgba = (cmap(norm) * 255).astype(np.uint8)
        Image.fromarray(rgba).save(out_dir / f"{name}.png")

    k = seg.shape[0]
    dump("relation", out["relation"].reshape(k, h, wid))
    dump("global_ctx", out["global_ctx"])
    dump("local_ctx", out["local_ctx"])
    dump("enhanced", out["enhanced"])
    return {
        "relation_shape": list(out["relation"].shape),
        "global_shape": list(out["global_ctx"].shape),
        "local_shape": list(out["local_ctx"].shape),
        "enhanced_shape": list(out["enhanced"].shape),
        "relation_colsum_max_err": float(np.abs(out["relation"].sum(axis=0) - 1.0).max()),
    }
