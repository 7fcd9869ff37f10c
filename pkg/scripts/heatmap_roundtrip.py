"""Encode/decode round-trip error across strides and sigmas.

    python3 scripts/heatmap_roundtrip.py --points 10000
"""

import argparse

import numpy as np

from cephforge.heatmap import CodecConfig, HeatmapStack, decode, encode_points


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--points", type=int, default=10_000)
    ap.add_argument("--size", type=int, default=512)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    pts = np.random.default_rng(args.seed).uniform(0, args.size, (args.points, 2))
    print(f"{'stride':>6} {'sigma':>5} {'refine':>6} {'max axis':>9} {'max eucl':>9} {'mean eucl':>9}   (units of stride)")
    for stride in (2.0, 4.0, 8.0):
        for sigma in (1.0, 2.0, 3.0):
            for refine in (False, True):
                cfg = CodecConfig(stride=stride, sigma=sigma, refine_subpixel=refine)
                grid = cfg.grid_for(args.size, args.size)
                coords = np.concatenate([
                    decode(HeatmapStack(encode_points(chunk, grid, cfg), stride), cfg)[0]
                    for chunk in np.array_split(pts, max(1, len(pts) // 500))
                ])
                d = (coords - pts) / stride
                e = np.hypot(*d.T)
                print(f"{stride:6g} {sigma:5g} {str(refine):>6} {np.abs(d).max():9.4f} {e.max():9.4f} {e.mean():9.4f}")


if __name__ == "__main__":
    main()
