#!/usr/bin/env python3
"""Fit the default model to 8 fixed synthetic sequences and report training AJAE.

    python3 scripts/run_overfit.py --out artifacts/overfit.csv
"""
import argparse
import logging

import torch

from footlift import config, experiments, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="key = value overrides on top of the overfit preset")
    ap.add_argument("--max-steps", type=int, default=2000)
    ap.add_argument("--target", type=float, default=5.0, help="stop once training AJAE (deg) is below this")
    ap.add_argument("--out", help="per-epoch CSV log")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    torch.set_num_threads(1)

    cfg = config.load_config(args.config, "overfit")
    oracle = experiments.half_normal_mean_deg(cfg.train.noise.init_rot_sigma_deg)
    res = experiments.overfit(cfg, args.max_steps, args.target)
    print(f"input AJAE: oracle {oracle:.2f} deg, measured {res.initial_ajae_deg:.2f} deg")
    print(f"refined AJAE {res.final_ajae_deg:.2f} deg after {res.steps} steps ({res.seconds:.0f} s)")
    if args.out:
        train.write_log(args.out, res.history)


if __name__ == "__main__":
    main()
