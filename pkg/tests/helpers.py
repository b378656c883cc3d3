"""Shared test fixtures that several modules need."""

import numpy as np

from textkernel.context import ContextWeights
from textkernel.numerics import ConvParams


def random_weights(c_in=4, c=6, c_aff=None, c_mid=8, k_out=2, seed=0, zero=()):
    """Seeded uniform [-0.1, 0.1] weight set, optionally zeroing some parts."""
    rng = np.random.default_rng(seed)
    c_aff = c_aff or c

    def mat(rows, cols, name):
        w = rng.uniform(-0.1, 0.1, (rows, cols))
        b = rng.uniform(-0.1, 0.1, rows)
        if name in zero:
            w = np.zeros_like(w)
            b = np.zeros_like(b)
        return ConvParams.linear(w, b)

    mask3 = rng.uniform(-0.1, 0.1, (c_mid, 3 * c, 3, 3))
    mask3_b = rng.uniform(-0.1, 0.1, c_mid)
    if "mask_head_3x3" in zero:
        mask3, mask3_b = np.zeros_like(mask3), np.zeros_like(mask3_b)
    w = ContextWeights(
        pixel_proj=mat(c, c_in, "pixel_proj"),
        phi=mat(c_aff, c, "phi"),
        psi=mat(c_aff, c, "psi"),
        rho=mat(c, c, "rho"),
        delta=mat(c, c, "delta"),
        mask_head_3x3=ConvParams(mask3, mask3_b),
        mask_head_1x1=mat(k_out, c_mid, "mask_head_1x1"),
    )
    w.validate()
    return w


def identity_1x1(c):
    return ConvParams.linear(np.eye(c))


def linear_oracle(params, vec):
    w = params.as_matrix()
    out = w @ vec
    if params.bias is not None:
        out = out + params.bias
    return out


def global_oracle(reps, rel, w, hw):
    """Per-pixel summation form of the global context."""
    c = reps.shape[0]
    k, n = rel.shape
    out = np.zeros((c, n))
    for i in range(n):
        acc = np.zeros(c)
        for kk in range(k):
            acc += rel[kk, i] * linear_oracle(w.delta, reps[:, kk])
        out[:, i] = linear_oracle(w.rho, acc)
    return out.reshape(c, *hw)


def local_oracle(reps, dist_logits, w):
    """Per-pixel summation form of the local context."""
    from textkernel.numerics import sigmoid

    c = reps.shape[0]
    k, h, wid = dist_logits.shape
    flat = dist_logits.reshape(k, -1)
    out = np.zeros((c, h * wid))
    for i in range(h * wid):
        acc = np.zeros(c)
        for kk in range(k):
            acc += sigmoid(np.array([flat[kk, i]]))[0] * linear_oracle(w.delta, reps[:, kk])
        out[:, i] = linear_oracle(w.rho, acc)
    return out.reshape(c, h, wid)
