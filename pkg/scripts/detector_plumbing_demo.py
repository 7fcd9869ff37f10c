"""Exercise the detector-side contract without a network.

Stub radiographs are rendered for a pool, ground-truth heatmaps are encoded,
two simulated "detectors" corrupt them with different noise levels, and the
decoded predictions are scored and compared in the MRE / SDR table layout.

    python3 scripts/detector_plumbing_demo.py --images 84 --out /tmp/demo
"""

import argparse
from pathlib import Path

import numpy as np

from cephforge.ait import write_png
from cephforge.heatmap import CodecConfig, HeatmapStack, decode, encode, mse_loss
from cephforge.metrics import compare_reports, evaluate, format_comparison, format_table
from cephforge.pipeline import render_stub_xray, synth_pool
from cephforge.schema import LandmarkSet, load_schema


def simulate(gt: LandmarkSet, cfg: CodecConfig, rng, jitter_px: float, noise: float):
    """Heatmaps of a detector whose peaks are off by ``jitter_px`` and whose planes carry noise."""
    shifted = gt.replace_points(np.clip(gt.points + rng.normal(0, jitter_px, gt.points.shape), 0, [gt.width - 1, gt.height - 1]))
    stack = encode(shifted, cfg)
    return HeatmapStack(stack.maps + rng.normal(0, noise, stack.maps.shape), cfg.stride)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--images", type=int, default=84)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, help="also write a few stub radiographs here")
    args = ap.parse_args()

    schema = load_schema()
    rng = np.random.default_rng(args.seed)
    test = synth_pool(args.images, args.seed + 1, schema)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        for i, ls in enumerate(test[:4]):
            write_png(render_stub_xray(ls, schema), args.out / f"stub_{i}.png")

    reports = {}
    for name, jitter, noise in (("baseline", 30.0, 0.05), ("augmented", 20.0, 0.05)):
        pairs, losses = [], []
        for gt in test:
            # resample to a 512-wide frame so the codec sees the network input scale
            f = 512 / max(gt.width, gt.height)
            small = LandmarkSet(gt.points * f, round(gt.width * f), round(gt.height * f), gt.spacing / f, gt.tags)
            cfg = CodecConfig()
            pred_maps = simulate(small, cfg, rng, jitter * f, noise)
            losses.append(mse_loss(pred_maps, encode(small, cfg)))
            coords, _ = decode(pred_maps, cfg, out_size=(small.width, small.height))
            pairs.append((coords, small))
        reports[name] = evaluate(pairs, by_tag=True)
        print(f"== {name}: heatmap MSE {np.mean(losses):.5f}")
        print(format_table(reports[name]))
    print(format_comparison(compare_reports(reports["baseline"], reports["augmented"])))


if __name__ == "__main__":
    main()
