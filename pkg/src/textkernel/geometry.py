"""Raster and polygon geometry: connected components, border following,
polygon offsetting with round joins, scanline rasterization, and mask IoU.

Coordinates are continuous pixel units with x = column, y = row; a pixel's
center sits at integer coordinates. Signed (shoelace) area is positive for
the counter-clockwise orientation all outer rings are normalized to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import shapely
from scipy import ndimage


@dataclass
class Polygon:
    """Closed point ring, shape (N, 2) float64, closing edge implicit.

    Outer rings are counter-clockwise (signed area >= 0). Rings traced from
    1-pixel-thin mask parts degenerate to zero area; downstream offsetting
    treats those as paths rather than rejecting them.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
            raise ValueError(f"polygon needs at least 3 (x, y) points, got {pts.shape}")
        if np.any(np.all(pts == np.roll(pts, -1, axis=0), axis=1)[:-1]):
            raise ValueError("polygon has identical consecutive points")
        self.points = pts

    def signed_area(self) -> float:
        x, y = self.points[:, 0], self.points[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def area(self) -> float:
        return abs(self.signed_area())

    def perimeter(self) -> float:
        d = np.roll(self.points, -1, axis=0) - self.points
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    def bounds(self):
        """(min_x, min_y, max_x, max_y)."""
        mn = self.points.min(axis=0)
        mx = self.points.max(axis=0)
        return float(mn[0]), float(mn[1]), float(mx[0]), float(mx[1])

    def translated(self, dx: float, dy: float) -> "Polygon":
        return Polygon(self.points + np.array([dx, dy]))

    def scaled(self, factor: float) -> "Polygon":
        return Polygon(self.points * factor)

    def ccw(self) -> "Polygon":
        if self.signed_area() < 0:
            return Polygon(self.points[::-1])
        return self

    def to_dict(self) -> dict:
        return {"points": [[float(x), float(y)] for x, y in self.points]}

    @classmethod
    def from_dict(cls, d: dict) -> "Polygon":
        return cls(np.asarray(d["points"], dtype=np.float64))


@dataclass
class LabeledMask:
    """Per-pixel instance ids, 0 = background, ids contiguous 1..count."""

    labels: np.ndarray
    count: int

    def component(self, idx: int) -> np.ndarray:
        return self.labels == idx


def connected_components(mask: np.ndarray) -> LabeledMask:
    """4-connected labeling with ids assigned in raster first-touch order."""
    mask = np.asarray(mask, dtype=bool)
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    raw, n = ndimage.label(mask, structure=structure)
    if n <= 1:
        return LabeledMask(raw.astype(np.int32), n)
    # scipy already scans in raster order, but the id contract shouldn't
    # depend on that implementation detail: remap by first occurrence.
    firsts = []
    for i, sl in enumerate(ndimage.find_objects(raw), start=1):
        r0 = sl[0].start
        row = raw[r0, sl[1].start : sl[1].stop]
        firsts.append((r0, sl[1].start + int(np.argmax(row == i))))
    order = sorted(range(n), key=lambda j: firsts[j])
    if order == list(range(n)):
        return LabeledMask(raw.astype(np.int32, copy=False), n)
    lut = np.zeros(n + 1, dtype=np.int32)
    lut[np.asarray(order) + 1] = np.arange(1, n + 1, dtype=np.int32)
    return LabeledMask(lut[raw], n)


# Moore neighborhood, clockwise on screen starting west: W NW N NE E SE S SW
_MOORE = ((0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1))
_MOORE_INDEX = {off: i for i, off in enumerate(_MOORE)}


def _pixel_box(r0: int, c0: int, r1: int, c1: int) -> Polygon:
    """Footprint rectangle (half-pixel halo) around a pixel bbox, CCW."""
    return Polygon(
        np.array(
            [
                [c0 - 0.5, r0 - 0.5],
                [c1 + 0.5, r0 - 0.5],
                [c1 + 0.5, r1 + 0.5],
                [c0 - 0.5, r1 + 0.5],
            ]
        )
    )


def extract_contour(mask: np.ndarray) -> Polygon:
    """Outer boundary of one 4-connected component by Moore border following.

    Vertices are the border pixel centers in traversal order; thin parts are
    traversed out and back, so the ring may be degenerate there. Components
    of one or two pixels fall back to their half-pixel footprint box so the
    result is always a usable ring.
    """
    mask = np.asarray(mask, dtype=bool)
    n_pixels = int(mask.sum())
    if n_pixels == 0:
        raise ValueError("cannot trace an empty component")
    if n_pixels <= 2:
        pixels = np.argwhere(mask)
        (r0, c0), (r1, c1) = pixels[0], pixels[-1]
        return _pixel_box(min(r0, r1), min(c0, c1), max(r0, r1), max(c0, c1))

    # trace on a zero-padded flat buffer: no bounds checks in the hot loop
    h, w = mask.shape
    stride = w + 2
    padded = np.zeros((h + 2) * stride, dtype=np.uint8)
    padded.reshape(h + 2, stride)[1:-1, 1:-1] = mask
    flat_offsets = tuple(dr * stride + dc for dr, dc in _MOORE)

    first_flat = int(np.argmax(padded))  # raster-first pixel of the padding layout
    start = first_flat
    back = start - 1  # west of the raster-first pixel is background
    path = [start]
    cur = start
    first_state = None
    rel_index = {off: i for i, off in enumerate(flat_offsets)}
    for _ in range(4 * n_pixels + 8):
        bi = rel_index[back - cur]
        nxt = -1
        for t in range(1, 9):
            step = (bi + t) & 7
            cand = cur + flat_offsets[step]
            if padded[cand]:
                nxt = cand
                back = cur + flat_offsets[(bi + t - 1) & 7]
                break
        if nxt < 0:  # isolated pixel; handled above, kept for safety
            break
        if first_state is None:
            first_state = (nxt, back)
        elif (nxt, back) == first_state:
            break
        path.append(nxt)
        cur = nxt
    if path[-1] == path[0] and len(path) > 1:
        path.pop()
    rc = np.asarray(path)
    rows = rc // stride - 1
    cols = rc % stride - 1
    if len(path) < 3:
        return _pixel_box(rows.min(), cols.min(), rows.max(), cols.max())
    ring = Polygon(np.column_stack([cols, rows]).astype(np.float64))
    return ring.ccw()


def _round_join_quad_segs(radius: float, arc_tolerance: float) -> int:
    """Segments per quarter circle so the chord sagitta stays within tolerance.

    A floor of 8 keeps small-radius joins smooth enough for the area
    contracts even though coarser arcs would already meet the tolerance.
    """
    if radius <= arc_tolerance:
        return 8
    step = 2.0 * math.acos(max(-1.0, 1.0 - arc_tolerance / radius))
    return max(8, math.ceil(math.pi / (2.0 * step)))


def _shapely_to_polygons(geom) -> list[Polygon]:
    parts = []
    if geom.is_empty:
        return parts
    geoms = geom.geoms if hasattr(geom, "geoms") else [geom]
    for g in geoms:
        if g.geom_type != "Polygon" or g.area == 0.0:
            continue
        pts = np.asarray(g.exterior.coords)[:-1]  # drop the closing duplicate
        keep = np.any(pts != np.roll(pts, 1, axis=0), axis=1)
        pts = pts[keep]
        if pts.shape[0] >= 3:
            parts.append(Polygon(pts).ccw())
    # splits can come back in any order; pin one
    parts.sort(key=lambda p: (p.points[:, 1].min(), p.points[:, 0].min(), -p.area()))
    return parts


def _drop_collinear(pts: np.ndarray) -> np.ndarray:
    """Remove interior vertices of straight runs; the ring's point set is
    unchanged, only its representation shrinks. Reversal vertices of
    degenerate out-and-back rings are kept (their edges are anti-parallel)."""
    into = pts - np.roll(pts, 1, axis=0)
    out = np.roll(pts, -1, axis=0) - pts
    cross = into[:, 0] * out[:, 1] - into[:, 1] * out[:, 0]
    dot = into[:, 0] * out[:, 0] + into[:, 1] * out[:, 1]
    keep = ~((cross == 0.0) & (dot > 0.0))
    if int(keep.sum()) >= 3:
        return pts[keep]
    return pts


def offset_polygon(
    p: Polygon,
    delta: float,
    arc_tolerance: float = 0.25,
    simplify_tolerance: float = 0.0,
) -> list[Polygon]:
    """Offset a ring outward (delta > 0) or inward (delta < 0), round joins.

    Inward offsets may split the ring or erase it entirely (empty list).
    Degenerate zero-area rings (thin traced contours) are offset as paths,
    which inflates them into a stadium around the traced centerline.

    simplify_tolerance > 0 Douglas-Peuckers the ring first; pixel-traced
    contours carry a vertex per border pixel, and collapsing their unit
    stairs before buffering is what keeps large offsets cheap.
    """
    if not math.isfinite(delta):
        raise ValueError("offset delta must be finite")
    if abs(delta) < 1e-9:
        # below any pixel-scale resolution; GEOS can return empty for
        # subnormal distances, which would turn a no-op into a vanished ring
        return [Polygon(p.points.copy())]
    qs = _round_join_quad_segs(abs(delta), arc_tolerance)
    pts = _drop_collinear(p.points)
    geom = shapely.Polygon(pts)
    if not geom.is_valid:
        geom = shapely.make_valid(geom)
    if geom.area == 0.0:
        if delta < 0:
            return []
        closed = np.vstack([pts, pts[:1]])
        geom = shapely.LineString(closed)
    if simplify_tolerance > 0.0:
        geom = geom.simplify(simplify_tolerance, preserve_topology=True)
    result = geom.buffer(delta, quad_segs=qs, join_style="round")
    return _shapely_to_polygons(result)


def rasterize(p: Polygon, height: int, width: int) -> np.ndarray:
    """Fill pixel centers inside the ring: even-odd rule, boundary closed.

    Scanline crossings use half-open edge spans so shared vertices count
    once; centers exactly on a crossing are kept (closed boundary). Lattice
    points lying on edges whose endpoints are both lattice points are also
    set, so re-rasterized traced contours cover thin mask parts.
    """
    out = np.zeros((height, width), dtype=bool)
    pts = p.points
    x0, y0 = pts[:, 0], pts[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    dy = y1 - y0

    nonflat = np.flatnonzero(dy != 0)
    if nonflat.size:
        lo = np.minimum(y0[nonflat], y1[nonflat])
        hi = np.maximum(y0[nonflat], y1[nonflat])
        r_start = np.maximum(np.ceil(lo), 0.0).astype(np.int64)
        r_stop = np.minimum(np.ceil(hi) - 1.0, height - 1.0).astype(np.int64)  # half-open [lo, hi)
        counts = np.maximum(r_stop - r_start + 1, 0)
        ids = np.repeat(nonflat, counts)
        if ids.size:
            base = np.repeat(np.cumsum(counts) - counts, counts)
            rows = np.repeat(r_start, counts) + (np.arange(ids.size) - base)
            t = (rows - y0[ids]) / dy[ids]
            xs = x0[ids] + t * (x1[ids] - x0[ids])
            order = np.lexsort((xs, rows))
            rows, xs = rows[order], xs[order]
            starts = np.searchsorted(rows, np.arange(height), side="left")
            ends = np.searchsorted(rows, np.arange(height), side="right")
            for r in range(int(rows[0]), int(rows[-1]) + 1):
                seg = xs[starts[r] : ends[r]]
                for j in range(0, seg.size - 1, 2):
                    a = max(0, math.ceil(seg[j]))
                    b = min(width - 1, math.floor(seg[j + 1]))
                    if b >= a:
                        out[r, a : b + 1] = True

    # boundary-closed semantics for traced rings: lattice vertices are on the
    # ring, as is every lattice point interior to a lattice-aligned edge
    ix0, iy0 = np.round(x0), np.round(y0)
    on_lattice = (x0 == ix0) & (y0 == iy0)
    if np.any(on_lattice):
        rr = iy0[on_lattice].astype(np.int64)
        cc = ix0[on_lattice].astype(np.int64)
        ok = (rr >= 0) & (rr < height) & (cc >= 0) & (cc < width)
        out[rr[ok], cc[ok]] = True
        long_edge = on_lattice & np.roll(on_lattice, -1)
        for i in np.flatnonzero(long_edge):
            dx_i = int(np.round(x1[i]) - ix0[i])
            dy_i = int(np.round(y1[i]) - iy0[i])
            g = math.gcd(abs(dx_i), abs(dy_i))
            if g <= 1:
                continue  # endpoints are vertices, already set above
            for k in range(1, g):
                c = int(ix0[i]) + k * dx_i // g
                r = int(iy0[i]) + k * dy_i // g
                if 0 <= r < height and 0 <= c < width:
                    out[r, c] = True
    return out


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two binary masks; empty/empty is 0."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 0.0
    return int(np.logical_and(a, b).sum()) / union
