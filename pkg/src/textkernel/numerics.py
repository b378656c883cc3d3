"""Minimal dense-tensor math: matmul, 1x1/3x3 convolutions with inference-mode
batch norm, stable activations, and the two segmentation losses with
hand-derived gradients.

Dense maps are plain numpy arrays laid out channel-major, shape (C, H, W).
Everything here is a pure function; nothing caches or mutates its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    """Raised when operand dimensions do not chain."""


def as_dense_map(a) -> np.ndarray:
    """Coerce to a float64 (C, H, W) array; 2-D input gets a channel axis."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3:
        raise ShapeError(f"dense map must be (C, H, W), got shape {a.shape}")
    return a


def check_probability_map(a: np.ndarray) -> None:
    if a.min() < 0.0 or a.max() > 1.0:
        raise ValueError("probability map has values outside [0, 1]")


def check_distance_map(a: np.ndarray) -> None:
    if a.min() < 0.0:
        raise ValueError("distance map has negative values")


@dataclass
class BatchNormParams:
    """Per-channel inference-mode batch norm: scale*(x-mean)/sqrt(var+eps)+shift."""

    scale: np.ndarray
    shift: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = 1e-5

    def validate(self, channels: int) -> None:
        for name in ("scale", "shift", "mean", "var"):
            arr = getattr(self, name)
            if arr.shape != (channels,):
                raise ShapeError(f"bn {name} must have shape ({channels},), got {arr.shape}")
        if np.any(self.var + self.eps <= 0.0):
            raise ValueError("bn running variance + eps must be positive")


@dataclass
class ConvParams:
    """Weights for a 1x1 or 3x3 convolution, optionally followed by batch norm.

    weights has shape (out, in, k, k); the 1x1 case may be constructed from a
    plain (out, in) matrix via `ConvParams.linear`.
    """

    weights: np.ndarray
    bias: np.ndarray | None = None
    bn: BatchNormParams | None = None

    @classmethod
    def linear(cls, matrix: np.ndarray, bias=None, bn=None) -> "ConvParams":
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(matrix[:, :, None, None], bias, bn)

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[2]

    def validate(self) -> None:
        if self.weights.ndim != 4 or self.weights.shape[2] != self.weights.shape[3]:
            raise ShapeError(f"conv weights must be (out, in, k, k), got {self.weights.shape}")
        if self.kernel_size not in (1, 3):
            raise ShapeError(f"kernel size must be 1 or 3, got {self.kernel_size}")
        if self.bias is not None and self.bias.shape != (self.out_channels,):
            raise ShapeError("conv bias length must equal out_channels")
        if self.bn is not None:
            self.bn.validate(self.out_channels)

    def as_matrix(self) -> np.ndarray:
        """(out, in) view of a 1x1 kernel."""
        if self.kernel_size != 1:
            raise ShapeError("as_matrix only applies to 1x1 kernels")
        return self.weights[:, :, 0, 0]


@dataclass
class LossWeights:
    """Weights combining the segmentation and distance losses."""

    seg_weight: float = 1.0
    dis_weight: float = 0.25

    def validate(self) -> None:
        if self.seg_weight < 0 or self.dis_weight < 0:
            raise ValueError("loss weights must be non-negative")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense product with a fixed row-major accumulation order.

    einsum without optimization keeps the reduction order deterministic
    regardless of BLAS threading, which the byte-reproducibility contract
    relies on.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return np.einsum("ij,jk->ik", a, b, optimize=False)


def conv_forward(x: np.ndarray, params: ConvParams, apply_bn_relu: bool = True) -> np.ndarray:
    """Apply a 1x1 or 3x3 convolution to a (C, H, W) map.

    3x3 kernels use zero padding 1 so spatial dims are preserved. With
    apply_bn_relu the (optional) batch norm runs in inference mode and the
    result is clamped at zero.
    """
    x = as_dense_map(x)
    params.validate()
    if x.shape[0] != params.in_channels:
        raise ShapeError(
            f"input has {x.shape[0]} channels, conv expects {params.in_channels}"
        )
    _, h, w = x.shape
    k = params.kernel_size
    if k == 1:
        out = np.einsum("oi,ihw->ohw", params.as_matrix(), x, optimize=False)
    else:
        padded = np.pad(x, ((0, 0), (1, 1), (1, 1)))
        # stack the 9 shifted views so a single fixed-order contraction does the sum
        shifts = np.stack(
            [padded[:, dy : dy + h, dx : dx + w] for dy in range(3) for dx in range(3)]
        )
        taps = params.weights.reshape(params.out_channels, params.in_channels, 9)
        taps = np.ascontiguousarray(np.moveaxis(taps, 2, 0))  # (9, out, in)
        out = np.einsum("soi,sihw->ohw", taps, shifts, optimize=False)
    if params.bias is not None:
        out = out + params.bias[:, None, None]
    if apply_bn_relu:
        if params.bn is not None:
            bn = params.bn
            inv = 1.0 / np.sqrt(bn.var + bn.eps)
            out = (out - bn.mean[:, None, None]) * (bn.scale * inv)[:, None, None]
            out = out + bn.shift[:, None, None]
        out = np.maximum(out, 0.0)
    return out


def softmax_over_k(logits: np.ndarray) -> np.ndarray:
    """Column-wise softmax of a (K, N) matrix; max-subtracted for stability."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] < 1:
        raise ShapeError(f"expected (K, N) with K >= 1, got {logits.shape}")
    shifted = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic; saturates cleanly for |x| ~ 1e2+."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def dice_loss(pred: np.ndarray, gt: np.ndarray, select_mask: np.ndarray):
    """Soft dice loss over the selected pixels, with its analytic gradient.

    loss = 1 - 2*sum(p*g) / (sum(p^2) + sum(g^2)), sums restricted to
    select_mask. An all-zero denominator (empty selection, or no text on
    either side) is defined as loss 0 with zero gradient.

    Returns (loss, grad) where grad has pred's shape and is zero off-mask.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    sel = np.asarray(select_mask, dtype=bool)
    if pred.shape != gt.shape or pred.shape != sel.shape:
        raise ShapeError("dice_loss operands must share a shape")
    p = np.where(sel, pred, 0.0)
    g = np.where(sel, gt, 0.0)
    inter = float(np.sum(p * g))
    denom = float(np.sum(p * p) + np.sum(g * g))
    grad = np.zeros_like(pred)
    if denom == 0.0:
        return 0.0, grad
    loss = 1.0 - 2.0 * inter / denom
    # d/dp_i [1 - 2A/B] = (-2 g_i B + 4 A p_i) / B^2
    grad_sel = (-2.0 * g * denom + 4.0 * inter * p) / (denom * denom)
    grad[sel] = grad_sel[sel]
    return loss, grad


def distance_ratio_loss(
    pred_d: np.ndarray,
    gt_d: np.ndarray,
    region_mask: np.ndarray,
    floor: float = 1e-3,
):
    """Mean log-ratio distance loss over region pixels, with gradient.

    Per pixel the penalty is ln(max(d, d_hat) / min(d, d_hat)), which is
    symmetric and zero only at equality. Predictions are clamped at `floor`
    before the ratio; labels are >= 1 on region pixels by construction so
    only predictions need the clamp. Empty region -> (0, zero gradient).
    """
    pred_d = np.asarray(pred_d, dtype=np.float64)
    gt_d = np.asarray(gt_d, dtype=np.float64)
    region = np.asarray(region_mask, dtype=bool)
    if pred_d.shape != gt_d.shape or pred_d.shape != region.shape:
        raise ShapeError("distance_ratio_loss operands must share a shape")
    grad = np.zeros_like(pred_d)
    n = int(region.sum())
    if n == 0:
        return 0.0, grad
    p = np.maximum(pred_d, floor)
    g = gt_d
    ratio = np.where(p > g, p / np.maximum(g, floor), g / p)
    loss = float(np.log(ratio[region]).mean())
    # d/dp ln(p/g) = 1/p for p > g, d/dp ln(g/p) = -1/p for p < g, 0 at tie
    sign = np.sign(p - g)
    unclamped = pred_d > floor
    grad_sel = sign / p * unclamped / n
    grad[region] = grad_sel[region]
    return loss, grad


def ohem_select(pred: np.ndarray, gt: np.ndarray, neg_pos_ratio: float = 3.0) -> np.ndarray:
    """Hard-example mask: all positives plus the highest-scoring negatives.

    Keeps min(ratio * #pos, #neg) negatives ranked by predicted score
    (stable order, so ties resolve by pixel index and results are
    reproducible). With no positives the mask covers every pixel.
    """
    if neg_pos_ratio <= 0:
        raise ValueError("neg_pos_ratio must be positive")
    pred = np.asarray(pred, dtype=np.float64)
    pos = np.asarray(gt, dtype=bool)
    if pred.shape != pos.shape:
        raise ShapeError("ohem_select operands must share a shape")
    n_pos = int(pos.sum())
    if n_pos == 0:
        return np.ones_like(pos)
    mask = pos.copy()
    neg_idx = np.flatnonzero(~pos.ravel())
    n_keep = min(int(neg_pos_ratio * n_pos), neg_idx.size)
    if n_keep > 0:
        neg_scores = pred.ravel()[neg_idx]
        order = np.argsort(-neg_scores, kind="stable")[:n_keep]
        flat = mask.ravel()
        flat[neg_idx[order]] = True
        mask = flat.reshape(pos.shape)
    return mask


def combined_loss(seg_loss: float, dis_loss: float, weights: LossWeights | None = None) -> float:
    """Weighted sum of the segmentation and distance losses."""
    if weights is None:
        weights = LossWeights()
    weights.validate()
    if not (np.isfinite(seg_loss) and np.isfinite(dis_loss)):
        raise ValueError("loss terms must be finite")
    return weights.seg_weight * seg_loss + weights.dis_weight * dis_loss


def enhancement_loss(
    pred_seg: np.ndarray,
    gt_seg: np.ndarray,
    pred_dist: np.ndarray,
    gt_dist: np.ndarray,
    region_mask: np.ndarray,
    weights: LossWeights | None = None,
    neg_pos_ratio: float = 3.0,
) -> dict:
    """Full enhancement-module loss from raw maps.

    One hard-example mask is selected on the segmentation map and applied to
    both terms: the dice loss directly, the distance-ratio loss through its
    intersection with the text region (distance labels only exist there).
    Returns the scalar terms plus the mask so callers can reuse it.
    """
    select = ohem_select(pred_seg, gt_seg, neg_pos_ratio)
    seg, seg_grad = dice_loss(pred_seg, gt_seg, select)
    dis, dis_grad = distance_ratio_loss(pred_dist, gt_dist, np.asarray(region_mask, bool) & select)
    return {
        "total": combined_loss(seg, dis, weights),
        "seg": seg,
        "dis": dis,
        "seg_grad": seg_grad,
        "dis_grad": dis_grad,
        "select_mask": select,
    }


def total_loss(base_loss: float, enhancement: float) -> float:
    """Overall training loss: the basic detector's own loss (supplied by the
    caller as a scalar; its internals are out of scope here) plus the
    enhancement-module loss."""
    if not (np.isfinite(base_loss) and np.isfinite(enhancement)):
        raise ValueError("loss terms must be finite")
    return base_loss + enhancement
