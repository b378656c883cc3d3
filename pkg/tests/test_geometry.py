import math

import numpy as np
import pytest
import shapely
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage

from textkernel.geometry import (
    Polygon,
    connected_components,
    extract_contour,
    mask_iou,
    offset_polygon,
    rasterize,
)


def random_blob(rng, h=24, w=24, seeds=5, grow=40):
    mask = np.zeros((h, w), dtype=bool)
    r, c = int(rng.integers(2, h - 2)), int(rng.integers(2, w - 2))
    mask[r, c] = True
    frontier = [(r, c)]
    for _ in range(grow):
        r, c = frontier[int(rng.integers(len(frontier)))]
        dr, dc = ((-1, 0), (1, 0), (0, -1), (0, 1))[int(rng.integers(4))]
        nr, nc = r + dr, c + dc
        if 0 <= nr < h and 0 <= nc < w:
            mask[nr, nc] = True
            frontier.append((nr, nc))
    lab = connected_components(mask)
    return lab.component(1)


def random_convex(rng, scale=30.0, n=12):
    pts = rng.normal(size=(n, 2)) * scale
    hull = shapely.MultiPoint(pts).convex_hull
    return Polygon(np.asarray(hull.exterior.coords)[:-1]).ccw()


def border_pixels(mask):
    eroded = ndimage.binary_erosion(mask, np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
    return mask & ~eroded


class TestConnectedComponents:
    def test_empty(self):
        lab = connected_components(np.zeros((5, 5), dtype=bool))
        assert lab.count == 0 and not lab.labels.any()

    def test_two_squares(self):
        mask = np.zeros((5, 8), dtype=bool)
        mask[1:4, 0:3] = True
        mask[1:4, 4:7] = True
        lab = connected_components(mask)
        assert lab.count == 2
        assert lab.labels[2, 1] == 1 and lab.labels[2, 5] == 2

    def test_diagonal_pixels_are_separate(self):
        mask = np.zeros((4, 4), dtype=bool)
        mask[1, 1] = mask[2, 2] = True
        assert connected_components(mask).count == 2

    def test_raster_first_touch_ids(self):
        mask = np.zeros((6, 6), dtype=bool)
        mask[4, 0] = True  # later in raster order
        mask[0, 5] = True  # first in raster order
        lab = connected_components(mask)
        assert lab.labels[0, 5] == 1 and lab.labels[4, 0] == 2


class TestExtractContour:
    def test_filled_3x3(self):
        mask = np.zeros((5, 5), dtype=bool)
        mask[1:4, 1:4] = True
        ring = extract_contour(mask)
        assert ring.points.shape[0] == 8
        got = {tuple(p) for p in ring.points}
        want = {(x, y) for x in (1.0, 2.0, 3.0) for y in (1.0, 2.0, 3.0)} - {(2.0, 2.0)}
        assert got == want
        assert ring.signed_area() > 0

    def test_single_row_out_and_back(self):
        mask = np.zeros((3, 7), dtype=bool)
        mask[1, 1:6] = True
        ring = extract_contour(mask)
        assert ring.points.shape[0] == 8  # 5 out, 3 back
        assert {tuple(p) for p in ring.points} == {(float(c), 1.0) for c in range(1, 6)}

    def test_single_pixel_box(self):
        mask = np.zeros((3, 3), dtype=bool)
        mask[1, 1] = True
        ring = extract_contour(mask)
        assert ring.area() == pytest.approx(1.0)
        assert ring.points.min() == 0.5 and ring.points.max() == 1.5

    def test_raster_roundtrip_covers_border(self, rng):
        for _ in range(100):
            mask = random_blob(rng)
            ring = extract_contour(mask)
            filled = rasterize(ring, *mask.shape)
            border = border_pixels(mask)
            assert np.all(filled[border]), "traced-and-filled ring must cover the border pixels"

    def test_full_canvas_component(self):
        mask = np.ones((5, 6), dtype=bool)
        ring = extract_contour(mask)
        # border pixels of the 5x6 block, traversed once each
        assert ring.points.shape[0] == 2 * 5 + 2 * 6 - 4
        assert np.array_equal(rasterize(ring, 5, 6), mask)

    def test_simple_ring_for_thick_blobs(self, rng):
        struct = np.ones((3, 3), dtype=bool)
        for _ in range(25):
            mask = ndimage.binary_dilation(random_blob(rng, grow=25), struct)
            mask = connected_components(mask).component(1)
            ring = extract_contour(mask)
            assert shapely.Polygon(ring.points).is_valid


class TestOffsetPolygon:
    def test_unit_square_outward_minkowski_area(self):
        square = Polygon(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))
        (out,) = offset_polygon(square, 1.0)
        want = 1.0 + 4.0 + math.pi
        assert out.area() == pytest.approx(want, rel=0.02)

    def test_square_inward(self):
        square = Polygon(np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]]))
        (out,) = offset_polygon(square, -3.0)
        assert out.area() == pytest.approx(16.0, rel=0.01)

    def test_zero_offset_identity(self, rng):
        poly = random_convex(rng)
        (out,) = offset_polygon(poly, 0.0)
        assert abs(out.area() - poly.area()) <= 1e-9

    def test_vanishing_inward_offset(self):
        square = Polygon(np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]]))
        assert offset_polygon(square, -3.0) == []

    def test_inward_offset_splits(self):
        # rectangle with a deep notch: the 2-px waist dies under a 2.2 inset
        dumbbell = Polygon(
            np.array(
                [[0, 0], [21, 0], [21, 8], [13, 8], [13, 2], [8, 2], [8, 8], [0, 8]], dtype=float
            )
        ).ccw()
        parts = offset_polygon(dumbbell, -2.2)
        assert len(parts) == 2

    def test_outward_then_inward_preserves_convex_area(self, rng):
        for _ in range(20):
            poly = random_convex(rng)
            d = 0.25 * math.sqrt(poly.area() / math.pi)
            if not offset_polygon(poly, -d):
                continue  # d exceeded the inradius; outside contract
            grown = offset_polygon(poly, d)
            assert len(grown) == 1
            back = offset_polygon(grown[0], -d)
            assert len(back) == 1
            assert back[0].area() == pytest.approx(poly.area(), rel=0.03)

    def test_degenerate_ring_becomes_stadium(self):
        line_ring = Polygon(np.array([[1, 1], [2, 1], [3, 1], [4, 1], [3, 1], [2, 1]], dtype=float))
        (out,) = offset_polygon(line_ring, 1.5)
        want = 3.0 * 3.0 + math.pi * 1.5**2  # stadium around a length-3 path
        assert out.area() == pytest.approx(want, rel=0.02)

    @given(
        st.integers(0, 2**32 - 1),
        st.one_of(st.just(0.0), st.floats(0.001, 5.0), st.floats(-5.0, -0.001)),
    )
    def test_total_on_traced_rings(self, seed, delta):
        # arbitrary blob contours, thin parts included: offsetting must never
        # throw, and every returned ring must be a usable positive-area polygon
        r = np.random.default_rng(seed)
        ring = extract_contour(random_blob(r, grow=25))
        parts = offset_polygon(ring, delta, simplify_tolerance=0.4)
        for part in parts:
            assert part.signed_area() > 0
            assert np.isfinite(part.points).all()
        if delta > 0:
            assert parts, "outward offsets of a nonempty ring cannot vanish"
            assert sum(p.area() for p in parts) > ring.area()

    def test_subresolution_offset_is_identity(self):
        square = Polygon(np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]]))
        (out,) = offset_polygon(square, 1e-12)
        assert np.array_equal(out.points, square.points)


class TestRasterize:
    def test_square_covering_16_centers(self):
        square = Polygon(np.array([[-0.5, -0.5], [3.5, -0.5], [3.5, 3.5], [-0.5, 3.5]]))
        out = rasterize(square, 6, 6)
        assert int(out.sum()) == 16
        assert out[:4, :4].all()

    def test_fully_off_canvas(self):
        square = Polygon(np.array([[50.0, 50.0], [60.0, 50.0], [60.0, 60.0], [50.0, 60.0]]))
        assert not rasterize(square, 10, 10).any()

    def test_area_ratio_for_large_convex(self, rng):
        checked = 0
        while checked < 30:
            poly = random_convex(rng, scale=18.0).translated(60, 60)
            min_x, min_y, max_x, max_y = poly.bounds()
            if poly.area() < 400 or min_x < 0 or min_y < 0 or max_x > 119 or max_y > 119:
                continue
            filled = int(rasterize(poly, 120, 120).sum())
            assert filled / poly.area() == pytest.approx(1.0, rel=0.05)
            checked += 1

    def test_monotone_on_nested_squares(self):
        h = w = 30
        prev = None
        for half in (3.2, 6.4, 9.1, 12.3):
            sq = Polygon(
                np.array(
                    [
                        [15 - half, 15 - half],
                        [15 + half, 15 - half],
                        [15 + half, 15 + half],
                        [15 - half, 15 + half],
                    ]
                )
            )
            cur = rasterize(sq, h, w)
            if prev is not None:
                assert np.all(cur[prev]), "larger square must cover the smaller one"
            prev = cur

    def test_concave_notch_excluded(self):
        # U shape: the gap column must stay empty, the arms filled
        mask = np.zeros((6, 7), dtype=bool)
        mask[1:5, 1:3] = True
        mask[1:5, 4:6] = True
        mask[4, 3] = True  # bridge at the bottom makes it one component
        ring = extract_contour(mask)
        filled = rasterize(ring, 6, 7)
        assert not filled[1:4, 3].any()
        assert np.array_equal(filled, mask)

    def test_partially_off_canvas_clips(self):
        # square straddling the left edge: only the in-canvas half appears
        sq = Polygon(np.array([[-4.5, 1.5], [3.5, 1.5], [3.5, 6.5], [-4.5, 6.5]]))
        out = rasterize(sq, 10, 10)
        assert out[2:7, 0:4].all()
        assert int(out.sum()) == 5 * 4

    def test_deterministic(self, rng):
        poly = random_convex(rng, scale=10.0).translated(12, 12)
        a = rasterize(poly, 30, 30)
        b = rasterize(poly, 30, 30)
        assert np.array_equal(a, b)


class TestMaskIoU:
    def test_identical(self):
        m = np.zeros((5, 5), dtype=bool)
        m[1:3, 1:3] = True
        assert mask_iou(m, m) == 1.0

    def test_disjoint(self):
        a = np.zeros((5, 5), dtype=bool)
        b = np.zeros((5, 5), dtype=bool)
        a[0, 0] = b[4, 4] = True
        assert mask_iou(a, b) == 0.0

    def test_half_overlap(self):
        a = np.zeros((20, 20), dtype=bool)
        b = np.zeros((20, 20), dtype=bool)
        a[0:10, 0:10] = True
        b[0:10, 5:15] = True
        assert mask_iou(a, b) == pytest.approx(1.0 / 3.0)

    def test_empty_empty(self):
        z = np.zeros((4, 4), dtype=bool)
        assert mask_iou(z, z) == 0.0

    @given(st.integers(0, 2**32 - 1))
    def test_symmetric_bounded(self, seed):
        r = np.random.default_rng(seed)
        a = r.random((6, 6)) < 0.4
        b = r.random((6, 6)) < 0.4
        v = mask_iou(a, b)
        assert v == mask_iou(b, a)
        assert 0.0 <= v <= 1.0
        assert (v == 1.0) == (np.array_equal(a, b) and a.any())
