"""Ground-truth generation: text region masks, shrunk kernel masks, and
per-pixel distance-to-boundary labels via an exact Euclidean transform.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .geometry import LabeledMask, Polygon, offset_polygon, rasterize

log = logging.getLogger(__name__)


@dataclass
class Scene:
    """Ground-truth text shapes on a pixel canvas."""

    height: int
    width: int
    instances: list[Polygon]
    shrink_ratio: float = 0.5
    requested: int | None = None  # asked-for instance count, if placement fell short

    def __post_init__(self):
        if not 0.0 < self.shrink_ratio < 1.0:
            raise ValueError("shrink_ratio must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "shrink_ratio": self.shrink_ratio,
            "instances": [p.to_dict() for p in self.instances],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        return cls(
            height=int(d["height"]),
            width=int(d["width"]),
            instances=[Polygon.from_dict(p) for p in d["instances"]],
            shrink_ratio=float(d.get("shrink_ratio", 0.5)),
        )


@dataclass
class LabelBundle:
    """Derived label maps for one scene."""

    region: np.ndarray  # bool  (H, W)
    kernel: np.ndarray  # bool  (H, W)
    distance: np.ndarray  # float64 (H, W), > 0 exactly on region pixels
    instance_ids: LabeledMask


def region_label(scene: Scene):
    """Union of rasterized instances plus a per-instance id map.

    Instances are painted in order; the generator guarantees separation, so
    first-touch wins only matters for malformed scenes.
    """
    ids = np.zeros((scene.height, scene.width), dtype=np.int32)
    for i, poly in enumerate(scene.instances, start=1):
        mask = rasterize(poly, scene.height, scene.width)
        ids[mask & (ids == 0)] = i
    return ids > 0, LabeledMask(ids, len(scene.instances))


def shrink_offset(poly: Polygon, shrink_ratio: float) -> float:
    """Inward offset distance d = A(1 - r^2) / L used to derive kernels."""
    peri = poly.perimeter()
    if peri == 0.0:
        return 0.0
    return poly.area() * (1.0 - shrink_ratio**2) / peri

def kernel_label(scene: Scene) -> np.ndarray:
    """Shrunk-instance mask: offset each polygon inward and rasterize.

    Instances whose inward offset vanishes are dropped; that is legal and
    simply leaves nothing to expand for them.
    """
    out = np.zeros((scene.height, scene.width), dtype=bool)
    for poly in scene.instances:
        d = shrink_offset(poly, scene.shrink_ratio)
        for part in offset_polygon(poly, -d):
            out |= rasterize(part, scene.height, scene.width)
    return out


def _column_pass(inside: np.ndarray) -> np.ndarray:
    """Vertical city-block distance to the nearest outside pixel, per column."""
    h, w = inside.shape
    big = h + w
    g = np.where(inside, big, 0).astype(np.float64)
    for r in range(1, h):
        np.minimum(g[r], g[r - 1] + 1.0, out=g[r])
    for r in range(h - 2, -1, -1):
        np.minimum(g[r], g[r + 1] + 1.0, out=g[r])
    return g


def _envelope_pass(f: list, width: int) -> list:
    """Felzenszwalb lower envelope of parabolas rooted at squared sources."""
    v = [0] * width
    z = [-np.inf] * (width + 1)
    z[1] = np.inf
    k = 0
    for q in range(1, width):
        s = (f[q] + q * q - f[v[k]] - v[k] * v[k]) / (2 * q - 2 * v[k])
        while s <= z[k]:
            k -= 1
            s = (f[q] + q * q - f[v[k]] - v[k] * v[k]) / (2 * q - 2 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    out = [0.0] * width
    k = 0
    for q in range(width):
        while z[k + 1] < q:
            k += 1
        dq = q - v[k]
        out[q] = dq * dq + f[v[k]]
    return out


def exact_edt(inside: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distance to the nearest pixel outside `inside`.

    Two-pass transform: a vertical sweep collects per-column distances, then
    a per-row lower envelope of parabolas resolves the 2-D minimum exactly.
    """
    inside = np.asarray(inside, dtype=bool)
    sq = _column_pass(inside) ** 2
    h, w = inside.shape
    out = np.empty((h, w), dtype=np.float64)
    for r in range(h):
        row = sq[r]
        if not row.any():
            out[r] = 0.0
            continue
        out[r] = _envelope_pass(row.tolist(), w)
    return out


def distance_label(instance_ids: LabeledMask) -> np.ndarray:
    """Per-pixel Euclidean distance to the nearest non-instance pixel.

    Computed per instance on a padded bounding-box crop so neighbours never
    contaminate each other; border pixels of an instance get exactly 1.0 and
    background stays 0. Everything beyond the canvas counts as non-instance,
    which keeps the border-pixel value at 1.0 even for masks flush against
    the edge. The padded crop is exact: anything outside a tight instance
    bbox is non-instance, and clamping an outside pixel onto the pad ring
    never increases its distance.
    """
    labels = instance_ids.labels
    out = np.zeros(labels.shape, dtype=np.float64)
    for idx in range(1, instance_ids.count + 1):
        mask = labels == idx
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        if rows.size == 0:
            continue
        r0, r1 = rows[0], rows[-1] + 1
        c0, c1 = cols[0], cols[-1] + 1
        crop = np.zeros((r1 - r0 + 2, c1 - c0 + 2), dtype=bool)
        crop[1:-1, 1:-1] = mask[r0:r1, c0:c1]
        sq = exact_edt(crop)[1:-1, 1:-1]
        sub = mask[r0:r1, c0:c1]
        out[r0:r1, c0:c1][sub] = np.sqrt(sq[sub])
    return out


def build_labels(scene: Scene) -> LabelBundle:
    """All label maps for a scene: region, kernel, distance, instance ids."""
    region, ids = region_label(scene)
    kernel = kernel_label(scene)
    if np.any(kernel & ~region):
        # inward offsets can graze the region raster edge by sub-pixel bits
        kernel = kernel & region
    return LabelBundle(region=region, kernel=kernel, distance=distance_label(ids), instance_ids=ids)
