"""Acceptance gate: every release criterion as one test with a printed
pass/fail line. Run with `pytest tests/test_acceptance.py -v -s`.
"""

import math
import subprocess
import sys
import time

import numpy as np
import pytest

from textkernel.geometry import Polygon, connected_components, offset_polygon
from textkernel.harness import NoiseConfig, bench_post, roundtrip_batch
from textkernel.labels import distance_label
from textkernel.numerics import dice_loss, distance_ratio_loss, softmax_over_k
from textkernel.scenes import SceneConfig

from helpers import global_oracle, local_oracle, random_weights
from test_labels import brute_force_distance
from test_numerics import central_diff


def report(name, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} - {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_roundtrip_fidelity():
    """200 mixed scenes on perfect labels: F@0.5 = 1.00, mean IoU >= 0.90, < 60 s."""
    t0 = time.perf_counter()
    agg = roundtrip_batch(SceneConfig(), 200, method="bg")
    elapsed = time.perf_counter() - t0
    ok = agg["f_measure"] == 1.0 and agg["mean_matched_iou"] >= 0.90 and elapsed < 60.0
    report(
        "round-trip fidelity",
        ok,
        f"F={agg['f_measure']:.4f} meanIoU={agg['mean_matched_iou']:.4f} "
        f"({agg['matched']}/{agg['n_gt']} matched, {elapsed:.1f} s)",
    )


def test_speed_trend():
    """1024px map, 5 instances >= 5% canvas each: contour-guided wall time
    < 0.2x aggregation (single-threaded medians of 20), and the decision
    touch counters scale with perimeter resp. area (log-log slope 1 +- 0.15)."""
    table = bench_post(map_size=1024, runs=20, warmups=3)
    from textkernel.harness import _bench_scene  # layout under test
    from textkernel.labels import build_labels

    bundle = build_labels(_bench_scene(1024, round(1024 * 0.42), 5))
    counts = np.bincount(bundle.instance_ids.labels.ravel())[1:]
    coverage_ok = len(counts) == 5 and counts.min() >= 0.05 * 1024 * 1024

    bg_ms = table["methods"]["bg"]["median_post_ms"]
    pa_ms = table["methods"]["pa"]["median_post_ms"]
    ratio_ok = bg_ms < 0.2 * pa_ms

    perims, area_px, bg_touch, pa_touch = [], [], [], []
    for scale in (128, 180, 256, 360, 500):
        t = bench_post(map_size=1024, instance_scale=scale, runs=1, warmups=0)
        perims.append(t["kernel_contour_px"])
        area_px.append(t["region_area_px"])
        bg_touch.append(t["methods"]["bg"]["decision_pixel_touches"])
        pa_touch.append(t["methods"]["pa"]["decision_pixel_touches"])
    bg_slope = float(np.polyfit(np.log(perims), np.log(bg_touch), 1)[0])
    pa_slope = float(np.polyfit(np.log(area_px), np.log(pa_touch), 1)[0])
    slopes_ok = abs(bg_slope - 1.0) <= 0.15 and abs(pa_slope - 1.0) <= 0.15

    report(
        "speed trend",
        coverage_ok and ratio_ok and slopes_ok,
        f"bg {bg_ms:.1f} ms vs pa {pa_ms:.1f} ms (ratio {bg_ms / pa_ms:.3f}), "
        f"slopes bg {bg_slope:.3f} / pa {pa_slope:.3f}, min coverage "
        f"{counts.min() / 1024**2:.3f}",
    )


def test_equation_form_equivalence():
    """Matrix-product paths match the per-pixel summation forms to 1e-8."""
    from textkernel.context import global_context, local_context

    rng = np.random.default_rng(77)
    worst_g = worst_l = 0.0
    for trial in range(50):
        c = int(rng.integers(2, 9))
        k = int(rng.integers(1, 5))
        h, wid = int(rng.integers(2, 17)), int(rng.integers(2, 17))
        w = random_weights(c=c, seed=1000 + trial)
        reps = rng.normal(size=(c, k))
        rel = softmax_over_k(rng.normal(size=(k, h * wid)))
        got = global_context(reps, rel, w, (h, wid))
        want = global_oracle(reps, rel, w, (h, wid))
        worst_g = max(worst_g, np.max(np.abs(got - want)) / max(np.max(np.abs(want)), 1e-12))

        dist = rng.normal(scale=3.0, size=(k, h, wid))
        got = local_context(reps, dist, w)
        want = local_oracle(reps, dist, w)
        worst_l = max(worst_l, np.max(np.abs(got - want)) / max(np.max(np.abs(want)), 1e-12))
    ok = worst_g <= 1e-8 and worst_l <= 1e-8
    report("equation-form equivalence", ok, f"max rel err global {worst_g:.2e}, local {worst_l:.2e}")


def test_distance_transform_exactness():
    """Exact equality with the brute-force complement-convention minimum."""
    rng = np.random.default_rng(5)
    mismatches = 0
    for _ in range(100):
        h, w = int(rng.integers(4, 65)), int(rng.integers(4, 65))
        mask = rng.random((h, w)) < rng.uniform(0.25, 0.6)
        lab = connected_components(mask)
        if not np.array_equal(distance_label(lab), brute_force_distance(lab.labels)):
            mismatches += 1
    report("distance-transform exactness", mismatches == 0, f"{mismatches}/100 masks mismatched")


def test_loss_correctness():
    """Analytic gradients vs central differences (1e-4 rel), plus the
    dice zero-at-equality and ratio symmetry/zero-iff-equal contracts."""
    rng = np.random.default_rng(9)
    worst_dice = worst_ratio = 0.0
    for _ in range(100):
        pred = rng.uniform(0.05, 0.95, (8, 8))
        gt = (rng.random((8, 8)) < 0.4).astype(float)
        sel = rng.random((8, 8)) < 0.8
        if not gt[sel].any():
            gt[np.argwhere(sel)[0][0], np.argwhere(sel)[0][1]] = 1.0
        _, grad = dice_loss(pred, gt, sel)
        fd = central_diff(lambda p: dice_loss(p, gt, sel)[0], pred.copy())
        worst_dice = max(worst_dice, np.linalg.norm(fd - grad) / max(np.linalg.norm(fd), 1e-12))

        pred_d = rng.uniform(0.5, 6.0, (8, 8))
        gt_d = rng.uniform(1.0, 6.0, (8, 8))
        pred_d[np.abs(pred_d - gt_d) < 1e-3] += 0.01
        region = rng.random((8, 8)) < 0.7
        _, grad = distance_ratio_loss(pred_d, gt_d, region)
        fd = central_diff(lambda p: distance_ratio_loss(p, gt_d, region)[0], pred_d.copy())
        worst_ratio = max(worst_ratio, np.linalg.norm(fd - grad) / max(np.linalg.norm(fd), 1e-12))

    gt = (rng.random((8, 8)) < 0.5).astype(float)
    zero_at_equal = dice_loss(gt, gt, np.ones_like(gt, dtype=bool))[0] == 0.0

    a = rng.uniform(1, 5, (6, 6))
    b = rng.uniform(1, 5, (6, 6))
    region = np.ones((6, 6), dtype=bool)
    symmetric = distance_ratio_loss(a, b, region)[0] == pytest.approx(
        distance_ratio_loss(b, a, region)[0], abs=1e-12
    )
    zero_iff = distance_ratio_loss(a, a, region)[0] == 0.0 and distance_ratio_loss(a, b, region)[0] > 0

    ok = worst_dice <= 1e-4 and worst_ratio <= 1e-4 and zero_at_equal and symmetric and zero_iff
    report(
        "loss correctness",
        ok,
        f"grad rel err dice {worst_dice:.2e}, ratio {worst_ratio:.2e}; "
        f"dice(gt,gt)=0 {zero_at_equal}, ratio symmetric {symmetric}",
    )


def test_baseline_ordering_on_corrupted_inputs():
    """With distance jitter +-20% and probability noise 0.1, the contour-guided
    expander is at least as accurate as a fixed offset misestimated at 2x."""
    noise = NoiseConfig(prob_sigma=0.1, distance_jitter=0.2)
    bg = roundtrip_batch(SceneConfig(), 100, method="bg", noise=noise)
    fixed = roundtrip_batch(
        SceneConfig(), 100, method="fixed", noise=noise, fixed_delta_factor=2.0
    )
    ok = bg["mean_scene_f"] >= fixed["mean_scene_f"]
    report(
        "baseline ordering under corruption",
        ok,
        f"mean F bg {bg['mean_scene_f']:.4f} vs fixed(2x) {fixed['mean_scene_f']:.4f}",
    )


def test_geometry_offsets():
    """Unit-square dilation matches the disk Minkowski sum within 2%;
    grow-then-shrink keeps convex areas within 3%."""
    square = Polygon(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))
    (grown,) = offset_polygon(square, 1.0)
    want = 1.0 + 4.0 + math.pi
    square_ok = abs(grown.area() - want) / want <= 0.02

    import shapely

    rng = np.random.default_rng(3)
    worst = 0.0
    checked = 0
    while checked < 25:
        pts = rng.normal(size=(10, 2)) * 20.0
        hull = shapely.MultiPoint(pts).convex_hull
        poly = Polygon(np.asarray(hull.exterior.coords)[:-1]).ccw()
        d = 0.25 * math.sqrt(poly.area() / math.pi)
        if not offset_polygon(poly, -d):
            continue
        back = offset_polygon(offset_polygon(poly, d)[0], -d)
        worst = max(worst, abs(back[0].area() - poly.area()) / poly.area())
        checked += 1
    ok = square_ok and worst <= 0.03
    report(
        "geometry offsets",
        ok,
        f"unit-square area {grown.area():.4f} (want {want:.4f}), "
        f"worst grow/shrink drift {worst:.4f}",
    )


def test_cli_determinism(tmp_path):
    """Fixed-seed CLI commands produce byte-identical result artifacts across
    repeat runs and across thread counts."""

    def run(*args):
        proc = subprocess.run(
            [sys.executable, "-m", "textkernel.cli", *map(str, args)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr

    outputs = {}
    for tag, threads in (("one", 1), ("two", 1), ("four", 4)):
        base = tmp_path / tag
        run("labelgen", "--out-dir", base / "labels", "--seed", "11", "--height", "224", "--width", "224")
        run("expand", "--in-dir", base / "labels", "--out-dir", base / "det",
            "--method", "bg", "--threads", threads)
        run("roundtrip", "--out-dir", base / "rt", "--scenes", "3", "--seed", "5", "--threads", threads)
        outputs[tag] = {
            rel: (base / rel).read_bytes()
            for rel in (
                "labels/region.npy", "labels/kernel.npy", "labels/distance.npy",
                "labels/ids.npy", "labels/scene.json", "det/detections.json", "rt/report.json",
            )
        }
    mismatched = [
        rel
        for rel in outputs["one"]
        if outputs["one"][rel] != outputs["two"][rel] or outputs["one"][rel] != outputs["four"][rel]
    ]
    report("CLI determinism", not mismatched, f"mismatched artifacts: {mismatched or 'none'}")
