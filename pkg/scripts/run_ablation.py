#!/usr/bin/env python3
"""Train output-representation / input-joint variants and compare held-out AJAE.

Trains on "everyday" motion and validates on "complex-foot" motion with
random root orientations (see the ablate preset).  By default only the two
residual variants are run; ``--variants all`` runs the whole grid, which
takes several times longer.

    python3 scripts/run_ablation.py --out artifacts/ablate.csv
"""
import argparse
import logging

import torch

from footlift import config, experiments


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="key = value overrides on top of the ablate preset")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--variants", default="residual_global,residual_relative")
    ap.add_argument("--out", default="ablate.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    torch.set_num_threads(1)

    cfg = config.load_config(args.config, "ablate")
    variants = list(experiments.VARIANTS) if args.variants == "all" else args.variants.split(",")
    rows = experiments.ablate(cfg, variants, [int(s) for s in args.seeds.split(",")])
    experiments.write_ablation(args.out, rows)
    for r in rows:
        print(f"seed {r['seed']}  {r['variant']:24s} initial {r['initial_ajae_deg']:6.2f}  "
              f"refined {r['val_ajae_deg']:6.2f}  margin {r['margin_vs_reference_deg']:+6.2f}")
    if {"residual_global", "residual_relative"} <= set(variants):
        wins, total = experiments.reference_wins(rows)
        print(f"residual_global beats residual_relative on {wins}/{total} seeds")


if __name__ == "__main__":
    main()
