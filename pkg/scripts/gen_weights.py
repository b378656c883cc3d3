#!/usr/bin/env python3
"""Write a seeded random weight bundle for the context pipeline.

The context module itself never invents weights; demos load them from a
directory of NPY arrays, and this script is how such a directory is made
when no trained weights are around. Init is uniform [-0.1, 0.1].
"""

import argparse

import numpy as np

from textkernel.context import ContextWeights, save_weight_bundle
from textkernel.numerics import ConvParams


def random_bundle(c_in, c, c_mid, k_out, seed):
    rng = np.random.default_rng(seed)

    def mat(rows, cols):
        return ConvParams.linear(
            rng.uniform(-0.1, 0.1, (rows, cols)), rng.uniform(-0.1, 0.1, rows)
        )

    w = ContextWeights(
        pixel_proj=mat(c, c_in),
        phi=mat(c, c),
        psi=mat(c, c),
        rho=mat(c, c),
        delta=mat(c, c),
        mask_head_3x3=ConvParams(
            rng.uniform(-0.1, 0.1, (c_mid, 3 * c, 3, 3)), rng.uniform(-0.1, 0.1, c_mid)
        ),
        mask_head_1x1=mat(k_out, c_mid),
    )
    w.validate()
    return w


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir")
    parser.add_argument("--in-channels", type=int, default=5, help="feature channels consumed")
    parser.add_argument("--channels", type=int, default=8, help="pixel-representation width C")
    parser.add_argument("--head-channels", type=int, default=12, help="mask-head hidden width")
    parser.add_argument("--out-maps", type=int, default=2, help="enhanced segmentation channels")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    bundle = random_bundle(args.in_channels, args.channels, args.head_channels, args.out_maps, args.seed)
    save_weight_bundle(bundle, args.out_dir)
    print(f"wrote weight bundle to {args.out_dir}")


if __name__ == "__main__":
    main()
