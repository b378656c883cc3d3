"""Kernel expansion post-processing.

Three expanders share one contract: take probability/distance maps, return
scored instance polygons plus stage timings and an instrumented count of
the pixels touched by the expansion *decision* step. The contour-guided
expander samples the distance map only along each kernel contour; the
aggregation baseline floods every region pixel; the fixed-offset baseline
grows every contour by one preset value.
"""

from __future__ import annotations

import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import LabeledMask, Polygon, connected_components, extract_contour, offset_polygon, rasterize

# pixel-traced contours carry one vertex per border pixel; collapsing their
# sub-half-pixel stairs before the geometric offset does not change scores
# at the rasterized level but keeps the offset cost bounded
_CONTOUR_SIMPLIFY_TOL = 0.4


@dataclass
class PostConfig:
    kernel_threshold: float = 0.5
    region_threshold: float = 0.5
    min_kernel_area: float = 16.0
    score_threshold: float = 0.5
    distance_scale: float = 1.0  # output-stride compensation for map -> image px

    def validate(self) -> None:
        for name in ("kernel_threshold", "region_threshold", "score_threshold"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.min_kernel_area < 0:
            raise ValueError("min_kernel_area must be >= 0")
        if self.distance_scale <= 0:
            raise ValueError("distance_scale must be positive")

    def to_dict(self) -> dict:
        return {
            "kernel_threshold": self.kernel_threshold,
            "region_threshold": self.region_threshold,
            "min_kernel_area": self.min_kernel_area,
            "score_threshold": self.score_threshold,
            "distance_scale": self.distance_scale,
        }


@dataclass
class Detection:
    polygon: Polygon
    score: float

    def to_dict(self) -> dict:
        d = self.polygon.to_dict()
        d["score"] = float(self.score)
        return d


@dataclass
class DetectionResult:
    instances: list[Detection] = field(default_factory=list)
    model_ms: float = 0.0
    post_ms: float = 0.0
    decision_pixel_touches: int = 0

    def to_dict(self, with_timings: bool = False) -> dict:
        d = {"instances": [det.to_dict() for det in self.instances]}
        if with_timings:
            d["timings"] = {"model_ms": self.model_ms, "post_ms": self.post_ms}
            d["decision_pixel_touches"] = self.decision_pixel_touches
        return d


def _component_crops(comp: LabeledMask, min_area: float):
    """Bounding-box crops for each component, skipping too-small kernels."""
    out = []
    for i, sl in enumerate(ndimage.find_objects(comp.labels), start=1):
        if sl is None:
            continue
        mask = comp.labels[sl] == i
        if int(mask.sum()) < min_area:
            continue
        out.append((i, int(sl[0].start), int(sl[1].start), mask))
    return out


def _mean_prob(prob: np.ndarray, r0: int, c0: int, mask: np.ndarray) -> float:
    h, w = mask.shape
    return float(prob[r0 : r0 + h, c0 : c0 + w][mask].mean())


def _refine_against_region(expanded: Polygon, region: np.ndarray) -> Polygon | None:
    """Rasterize an expanded contour, clip it to the region map, and trace
    the largest surviving piece. Work stays inside the expanded bbox."""
    height, width = region.shape
    min_x, min_y, max_x, max_y = expanded.bounds()
    r0 = max(0, int(np.floor(min_y)))
    c0 = max(0, int(np.floor(min_x)))
    r1 = min(height - 1, int(np.ceil(max_y)))
    c1 = min(width - 1, int(np.ceil(max_x)))
    if r1 < r0 or c1 < c0:
        return None
    local = rasterize(expanded.translated(-c0, -r0), r1 - r0 + 1, c1 - c0 + 1)
    local &= region[r0 : r1 + 1, c0 : c1 + 1]
    if not local.any():
        return None
    pieces = connected_components(local)
    if pieces.count > 1:
        sizes = np.bincount(pieces.labels.ravel(), minlength=pieces.count + 1)
        best = int(np.argmax(sizes[1:])) + 1  # argmax keeps the lowest id on ties
        local = pieces.labels == best
    return extract_contour(local).translated(c0, r0)


def _expand_by_offset(kernel_prob, distance, region_prob, cfg: PostConfig, fixed_delta, threads):
    """Common path for the contour-guided and fixed-offset expanders.

    fixed_delta None means "sample the distance map along the contour";
    otherwise every instance uses the given offset and nothing is sampled.
    """
    cfg.validate()
    kernel_prob = np.asarray(kernel_prob, dtype=np.float64)
    region_prob = np.asarray(region_prob, dtype=np.float64)
    if kernel_prob.shape != region_prob.shape:
        raise ValueError("kernel and region maps must share a shape")
    if distance is not None:
        distance = np.asarray(distance, dtype=np.float64)
        if distance.shape != kernel_prob.shape:
            raise ValueError("distance map must match the kernel map shape")
        if distance.min() < 0:
            raise ValueError("distance map must be non-negative")

    t0 = time.perf_counter()
    kernel_bin = kernel_prob >= cfg.kernel_threshold
    if not kernel_bin.any():
        return DetectionResult([], 0.0, (time.perf_counter() - t0) * 1000.0, 0)
    region_bin = region_prob >= cfg.region_threshold
    comps = connected_components(kernel_bin)
    crops = _component_crops(comps, cfg.min_kernel_area)

    def worker(item):
        _, r0, c0, mask = item
        contour = extract_contour(mask).translated(c0, r0)
        if fixed_delta is None:
            # decision step: read the distance map at the contour pixels only
            cols = np.clip(np.round(contour.points[:, 0]).astype(int), 0, kernel_prob.shape[1] - 1)
            rows = np.clip(np.round(contour.points[:, 1]).astype(int), 0, kernel_prob.shape[0] - 1)
            delta = float(distance[rows, cols].mean())
            sampled = contour.points.shape[0]
        else:
            delta = float(fixed_delta)
            sampled = 0
        expanded = offset_polygon(contour, delta, simplify_tolerance=_CONTOUR_SIMPLIFY_TOL)
        if not expanded:
            return None, sampled
        final = _refine_against_region(max(expanded, key=lambda p: p.area()), region_bin)
        if final is None:
            return None, sampled
        score = _mean_prob(kernel_prob, r0, c0, mask)
        if score < cfg.score_threshold:
            return None, sampled
        if cfg.distance_scale != 1.0:
            final = final.scaled(cfg.distance_scale)
        return Detection(final, score), sampled

    if threads > 1 and len(crops) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(worker, crops))
    else:
        results = [worker(item) for item in crops]

    instances = [det for det, _ in results if det is not None]
    touches = sum(sampled for _, sampled in results)
    post_ms = (time.perf_counter() - t0) * 1000.0
    return DetectionResult(instances, 0.0, post_ms, touches)


def boundary_guided_expand(
    kernel_prob: np.ndarray,
    distance: np.ndarray,
    region_prob: np.ndarray,
    cfg: PostConfig | None = None,
    threads: int = 1,
) -> DetectionResult:
    """Expand each kernel by the mean predicted distance along its contour.

    Per kernel component: trace the contour, average the distance map at the
    contour pixels, grow the contour outward by that amount (round joins),
    clip the filled result against the binarized region map, and trace the
    largest surviving piece. Work per instance scales with the contour
    length plus the expanded bounding box, never with total region area.
    """
    return _expand_by_offset(kernel_prob, distance, region_prob, cfg or PostConfig(), None, threads)


def fixed_offset_expand(
    kernel_prob: np.ndarray,
    region_prob: np.ndarray,
    fixed_delta: float,
    cfg: PostConfig | None = None,
    threads: int = 1,
) -> DetectionResult:
    """Contour expansion by one preset offset for every instance."""
    if fixed_delta < 0:
        raise ValueError("fixed_delta must be >= 0")
    return _expand_by_offset(kernel_prob, None, region_prob, cfg or PostConfig(), fixed_delta, threads)


def pixel_aggregation_expand(
    kernel_prob: np.ndarray,
    region_prob: np.ndarray,
    cfg: PostConfig | None = None,
) -> DetectionResult:
    """Assign every region pixel to a kernel by multi-source breadth-first
    search (4-connected); ties at equal distance go to the lower kernel id.

    The flood touches every reachable region pixel, which is exactly the
    cost profile this baseline exists to demonstrate. Region pixels no
    kernel can reach stay unassigned.
    """
    cfg = cfg or PostConfig()
    cfg.validate()
    kernel_prob = np.asarray(kernel_prob, dtype=np.float64)
    region_prob = np.asarray(region_prob, dtype=np.float64)
    if kernel_prob.shape != region_prob.shape:
        raise ValueError("kernel and region maps must share a shape")

    t0 = time.perf_counter()
    height, width = kernel_prob.shape
    kernel_bin = kernel_prob >= cfg.kernel_threshold
    if not kernel_bin.any():
        return DetectionResult([], 0.0, (time.perf_counter() - t0) * 1000.0, 0)
    region_bin = region_prob >= cfg.region_threshold
    comps = connected_components(kernel_bin)
    crops = _component_crops(comps, cfg.min_kernel_area)

    assigned = np.zeros((height, width), dtype=np.int32)
    queue = deque()
    keep = {}
    for i, r0, c0, mask in crops:
        keep[i] = (r0, c0, mask)
        rr, cc = np.nonzero(mask)
        for r, c in zip(rr + r0, cc + c0):
            assigned[r, c] = i
            queue.append((int(r), int(c)))

    touches = 0
    while queue:
        r, c = queue.popleft()
        touches += 1
        lab = assigned[r, c]
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < height and 0 <= nc < width and region_bin[nr, nc] and assigned[nr, nc] == 0:
                assigned[nr, nc] = lab
                queue.append((nr, nc))

    instances = []
    for i in sorted(keep):
        inst = assigned == i
        rows = np.flatnonzero(inst.any(axis=1))
        cols = np.flatnonzero(inst.any(axis=0))
        local = inst[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
        contour = extract_contour(local).translated(int(cols[0]), int(rows[0]))
        r0, c0, mask = keep[i]
        score = _mean_prob(kernel_prob, r0, c0, mask)
        if score < cfg.score_threshold:
            continue
        if cfg.distance_scale != 1.0:
            contour = contour.scaled(cfg.distance_scale)
        instances.append(Detection(contour, score))

    post_ms = (time.perf_counter() - t0) * 1000.0
    return DetectionResult(instances, 0.0, post_ms, touches)
