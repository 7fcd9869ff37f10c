"""Render topology images, prompts and stub radiographs for a few augmented sets.

    python3 scripts/render_examples.py --out examples_out --n 6
"""

import argparse
from pathlib import Path

from cephforge.ait import RasterStyle, rasterize, write_png
from cephforge.mira import AugmentConfig, mira_generate
from cephforge.pdg import generate_prompts, load_lexicon
from cephforge.pipeline import render_stub_xray, synth_pool
from cephforge.schema import load_schema


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--n", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--size", type=int, default=512)
    args = ap.parse_args()

    schema = load_schema()
    pool = synth_pool(16, args.seed, schema)
    sets = mira_generate(pool, AugmentConfig(n_l=args.n, seed=args.seed), schema)
    prompts = generate_prompts(load_lexicon(), args.n, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    style = RasterStyle()
    for i, ((ls, prov), prompt) in enumerate(zip(sets, prompts)):
        write_png(rasterize(ls, schema, args.size, style), args.out / f"topology_{i}.png")
        write_png(render_stub_xray(ls, schema, args.size), args.out / f"stub_{i}.png")
        applied = ", ".join(f"{n}={t:.1f}" for n, t in prov.applied_constraints)
        print(f"{i}: {prompt.text}\n   source {prov.source_id}, {applied}")
    print(f"images in {args.out}")


if __name__ == "__main__":
    main()
