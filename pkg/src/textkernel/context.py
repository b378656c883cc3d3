"""Context-enhanced kernel segmentation: per-instance text representations,
a global pixel/instance relation matrix, distance-weighted local context,
and the fused mask head producing the enhanced segmentation map.

All transforms here are inference-only; weights arrive from an NPY bundle
on disk (see `load_weight_bundle`).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import (
    BatchNormParams,
    ConvParams,
    ShapeError,
    as_dense_map,
    check_probability_map,
    conv_forward,
    matmul,
    sigmoid,
    softmax_over_k,
)


@dataclass
class ContextWeights:
    """Weight set for the context pipeline.

    phi/psi project text and pixel features into the shared affinity space;
    delta projects the text representations used as values; rho projects the
    aggregated context back to pixel-feature width. pixel_proj is the
    conv+bn+relu block that produces pixel representations from backbone
    features, and mask_head is (3x3 conv+bn+relu, 1x1 conv) over the fused
    [global, local, pixel] stack.
    """

    pixel_proj: ConvParams
    phi: ConvParams
    psi: ConvParams
    rho: ConvParams
    delta: ConvParams
    mask_head_3x3: ConvParams
    mask_head_1x1: ConvParams

    def validate(self) -> None:
        for name, p in self.named():
            p.validate()
        c = self.pixel_proj.out_channels
        if self.phi.in_channels != c or self.psi.in_channels != c:
            raise ShapeError("phi/psi must consume pixel-representation channels")
        if self.phi.out_channels != self.psi.out_channels:
            raise ShapeError("phi and psi must project into the same width")
        if self.delta.in_channels != c or self.delta.out_channels != c:
            raise ShapeError("delta must map C -> C")
        if self.rho.in_channels != c or self.rho.out_channels != c:
            raise ShapeError("rho must map C -> C")
        if self.mask_head_3x3.in_channels != 3 * c:
            raise ShapeError("mask head must consume the 3C fused stack")
        if self.mask_head_1x1.in_channels != self.mask_head_3x3.out_channels:
            raise ShapeError("mask head convs do not chain")

    def named(self):
        return [
            ("pixel_proj", self.pixel_proj),
            ("phi", self.phi),
            ("psi", self.psi),
            ("rho", self.rho),
            ("delta", self.delta),
            ("mask_head_3x3", self.mask_head_3x3),
            ("mask_head_1x1", self.mask_head_1x1),
        ]


def _linear(params: ConvParams, x: np.ndarray) -> np.ndarray:
    """Apply a 1x1 conv to a (C_in, N) matrix."""
    out = matmul(params.as_matrix(), x)
    if params.bias is not None:
        out = out + params.bias[:, None]
    return out


def pixel_representation(features: np.ndarray, w: ContextWeights) -> np.ndarray:
    """Pixel representations from backbone features: 1x1 conv + bn + relu."""
    return conv_forward(as_dense_map(features), w.pixel_proj, apply_bn_relu=True)


def text_representations(pixels: np.ndarray, seg: np.ndarray) -> np.ndarray:
    """Per-channel text representations T (C, K): seg-weighted pixel sums.

    seg holds the K initial segmentation probability maps; each one acts as
    a soft spatial weight over the pixel representations.
    """
    pixels = as_dense_map(pixels)
    seg = as_dense_map(seg)
    if pixels.shape[1:] != seg.shape[1:]:
        raise ShapeError("pixel and segmentation maps must share H, W")
    check_probability_map(seg)
    c = pixels.shape[0]
    k = seg.shape[0]
    p2 = pixels.reshape(c, -1)
    s2 = seg.reshape(k, -1)
    return matmul(p2, s2.T)


def relation_matrix(text_reps: np.ndarray, pixels: np.ndarray, w: ContextWeights) -> np.ndarray:
    """Soft assignment of every pixel to the K text representations.

    Affinity is a dot product in the phi/psi projection space, normalized
    over K per pixel, so every column of the (K, H*W) result sums to 1.
    """
    pixels = as_dense_map(pixels)
    c = pixels.shape[0]
    scores = matmul(_linear(w.phi, text_reps).T, _linear(w.psi, pixels.reshape(c, -1)))
    return softmax_over_k(scores)


def global_context(
    text_reps: np.ndarray, relation: np.ndarray, w: ContextWeights, hw: tuple[int, int]
) -> np.ndarray:
    """Relation-weighted mixture of text representations, per pixel."""
    h, wid = hw
    if relation.shape[1] != h * wid:
        raise ShapeError("relation matrix columns must cover H*W pixels")
    mixed = matmul(_linear(w.delta, text_reps), relation)
    out = _linear(w.rho, mixed)
    return out.reshape(out.shape[0], h, wid)


def local_context(text_reps: np.ndarray, dist_logits: np.ndarray, w: ContextWeights) -> np.ndarray:
    """Distance-gated mixture of text representations, per pixel.

    The raw distance-head output is squashed through a sigmoid and used as
    the per-instance weighting, tying each pixel to its own instance.
    """
    d = as_dense_map(dist_logits)
    k, h, wid = d.shape
    gate = sigmoid(d.reshape(k, -1))
    mixed = matmul(_linear(w.delta, text_reps), gate)
    out = _linear(w.rho, mixed)
    return out.reshape(out.shape[0], h, wid)


def fuse_and_segment(
    global_ctx: np.ndarray, local_ctx: np.ndarray, pixels: np.ndarray, w: ContextWeights
) -> np.ndarray:
    """Enhanced segmentation from the fused [global, local, pixel] stack."""
    g = as_dense_map(global_ctx)
    l = as_dense_map(local_ctx)
    p = as_dense_map(pixels)
    if not (g.shape == l.shape == p.shape):
        raise ShapeError("fused maps must share shape (C, H, W)")
    fused = np.concatenate([g, l, p], axis=0)
    hidden = conv_forward(fused, w.mask_head_3x3, apply_bn_relu=True)
    logits = conv_forward(hidden, w.mask_head_1x1, apply_bn_relu=False)
    return sigmoid(logits)


def enhance(features: np.ndarray, seg: np.ndarray, dist_logits: np.ndarray, w: ContextWeights) -> dict:
    """Full pipeline; returns every intermediate keyed by a short name."""
    w.validate()
    pixels = pixel_representation(features, w)
    reps = text_representations(pixels, seg)
    relation = relation_matrix(reps, pixels, w)
    hw = pixels.shape[1:]
    g = global_context(reps, relation, w, hw)
    l = local_context(reps, dist_logits, w)
    enhanced = fuse_and_segment(g, l, pixels, w)
    return {
        "pixels": pixels,
        "text_reps": reps,
        "relation": relation,
        "global_ctx": g,
        "local_ctx": l,
        "enhanced": enhanced,
    }


_BUNDLE_STEMS = (
    "pixel_proj",
    "phi",
    "psi",
    "rho",
    "delta",
    "mask_head_3x3",
    "mask_head_1x1",
)


class WeightBundleError(ValueError):
    """Weight directory is missing files or holds malformed arrays."""


def _load_conv(dirpath: Path, stem: str) -> ConvParams:
    weights = np.load(dirpath / f"{stem}.npy").astype(np.float64)
    if weights.ndim == 2:
        weights = weights[:, :, None, None]
    bias_path = dirpath / f"{stem}_bias.npy"
    bias = np.load(bias_path).astype(np.float64) if bias_path.exists() else None
    bn = None
    bn_paths = {k: dirpath / f"{stem}_bn_{k}.npy" for k in ("scale", "shift", "mean", "var")}
    if any(p.exists() for p in bn_paths.values()):
        missing = [p.name for p in bn_paths.values() if not p.exists()]
        if missing:
            raise WeightBundleError(f"incomplete batch-norm arrays for {stem}: missing {missing}")
        eps_path = dirpath / f"{stem}_bn_eps.npy"
        eps = float(np.load(eps_path)) if eps_path.exists() else 1e-5
        bn = BatchNormParams(
            *(np.load(bn_paths[k]).astype(np.float64) for k in ("scale", "shift", "mean", "var")),
            eps=eps,
        )
    return ConvParams(weights, bias, bn)


def load_weight_bundle(dirpath) -> ContextWeights:
    """Load a weight directory of float32 NPY arrays into ContextWeights."""
    dirpath = Path(dirpath)
    missing = [f"{s}.npy" for s in _BUNDLE_STEMS if not (dirpath / f"{s}.npy").exists()]
    if missing:
        raise WeightBundleError(f"weight bundle at {dirpath} is missing: {', '.join(missing)}")
    w = ContextWeights(**{stem: _load_conv(dirpath, stem) for stem in _BUNDLE_STEMS})
    w.validate()
    return w


def save_weight_bundle(w: ContextWeights, dirpath) -> None:
    """Write a ContextWeights set as the float32 NPY directory layout."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    for stem, params in w.named():
        weights = params.weights
        if params.kernel_size == 1:
            weights = params.as_matrix()
        np.save(dirpath / f"{stem}.npy", weights.astype("<f4"))
        if params.bias is not None:
            np.save(dirpath / f"{stem}_bias.npy", params.bias.astype("<f4"))
        if params.bn is not None:
            for k in ("scale", "shift", "mean", "var"):
                np.save(dirpath / f"{stem}_bn_{k}.npy", getattr(params.bn, k).astype("<f4"))
            np.save(dirpath / f"{stem}_bn_eps.npy", np.float32(params.bn.eps))
