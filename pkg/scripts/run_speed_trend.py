#!/usr/bin/env python3
"""Reproduce the post-processing speed trend at desk scale.

Times the contour-guided expander against pixel aggregation on one big map
(single-threaded medians), then sweeps instance scale and fits log-log
slopes of the decision pixel-touch counters against contour length and
region area. Expansion work that only touches contour pixels should sit
near slope 1 vs perimeter; full aggregation near slope 1 vs area.
"""

import argparse
import json

import numpy as np

from textkernel.harness import bench_post


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=1024)
    parser.add_argument("--runs", type=int, default=20)
    parser.add_argument("--warmups", type=int, default=3)
    parser.add_argument("--out", default=None, help="optional JSON dump of all tables")
    args = parser.parse_args()

    main_table = bench_post(map_size=args.size, runs=args.runs, warmups=args.warmups)
    bg = main_table["methods"]["bg"]
    pa = main_table["methods"]["pa"]
    print(f"map {args.size}x{args.size}, {main_table['instances']} instances, "
          f"region {main_table['region_area_px']} px")
    print(f"  contour-guided: {bg['median_post_ms']:8.2f} ms median, "
          f"{bg['decision_pixel_touches']:7d} decision touches")
    print(f"  aggregation:    {pa['median_post_ms']:8.2f} ms median, "
          f"{pa['decision_pixel_touches']:7d} decision touches")
    print(f"  wall-time ratio: {bg['median_post_ms'] / pa['median_post_ms']:.3f}")

    scales = [args.size * f for f in (0.12, 0.17, 0.24, 0.34, 0.48)]
    sweep = [bench_post(map_size=args.size, instance_scale=s, runs=1, warmups=0) for s in scales]
    perims = [t["kernel_contour_px"] for t in sweep]
    areas = [t["region_area_px"] for t in sweep]
    bg_touch = [t["methods"]["bg"]["decision_pixel_touches"] for t in sweep]
    pa_touch = [t["methods"]["pa"]["decision_pixel_touches"] for t in sweep]
    bg_slope = np.polyfit(np.log(perims), np.log(bg_touch), 1)[0]
    pa_slope = np.polyfit(np.log(areas), np.log(pa_touch), 1)[0]
    print(f"  touch scaling: contour-guided slope {bg_slope:.3f} vs perimeter, "
          f"aggregation slope {pa_slope:.3f} vs area")

    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"main": main_table, "sweep": sweep,
                       "bg_slope": bg_slope, "pa_slope": pa_slope}, fh, indent=2)
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
