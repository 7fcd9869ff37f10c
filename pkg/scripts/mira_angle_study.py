"""Angle distributions and rejection counts of augmented landmark sets.

    python3 scripts/mira_angle_study.py --pool-size 476 --count 3808
"""

import argparse
import time

import numpy as np

from cephforge.mira import AugmentConfig, mira_generate
from cephforge.pipeline import synth_pool
from cephforge.schema import load_schema, measure_angle


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--pool-size", type=int, default=476)
    ap.add_argument("--count", type=int, default=3808)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    schema = load_schema()
    pool = synth_pool(args.pool_size, args.seed, schema)
    t0 = time.perf_counter()
    out = mira_generate(pool, AugmentConfig(n_l=args.count, seed=args.seed), schema, jobs=args.jobs)
    dt = time.perf_counter() - t0

    print(f"{len(out)} sets from a pool of {len(pool)} in {dt:.1f}s")
    rej = np.array([p.rejections for _, p in out])
    print(f"rejections per slot: mean {rej.mean():.3f}, max {rej.max()}, slots with any {np.count_nonzero(rej)}")
    k = np.array([len(p.applied_constraints) for _, p in out])
    vals, counts = np.unique(k, return_counts=True)
    print("constraints applied per set:", {int(v): int(c) for v, c in zip(vals, counts)})
    print()
    print(f"{'constraint':<12} {'range':>12} {'pool mean':>10} {'out mean':>9} {'out min':>8} {'out max':>8} {'applied':>8}")
    for c in schema.constraints:
        src = np.array([measure_angle(ls, c) for ls in pool])
        res = np.array([measure_angle(ls, c) for ls, _ in out])
        n_applied = sum(any(n == c.name for n, _ in p.applied_constraints) for _, p in out)
        print(f"{c.name:<12} {f'[{c.min_deg:g}, {c.max_deg:g}]':>12} {src.mean():10.3f} {res.mean():9.3f} "
              f"{res.min():8.3f} {res.max():8.3f} {n_applied:8d}")


if __name__ == "__main__":
    main()
