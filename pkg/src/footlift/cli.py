"""Command-line entry point: ``footlift {synth,train,refine,eval,plot,gradcheck,ablate}``.

Exit codes: 0 success, 2 usage or configuration error, 3 data/format or IO
error, 4 numeric degeneration.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from footlift import config as config_mod
from footlift import experiments, footmr, io, kinematics, metrics, plot, rotmath, synth, train
from footlift.errors import (ConfigError, DegenerateInput, FootliftError, FormatError, LengthMismatch,
                             ShapeMismatch)
from footlift.kinematics import Skeleton

log = logging.getLogger("footlift")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
GRADCHECK_TOL = 1e-4


class UsageError(Exception):
    pass


def _config(args) -> config_mod.Config:
    return config_mod.load_config(args.config, args.preset)


def _skeleton(cfg: config_mod.Config) -> Skeleton:
    return io.load_skeleton(cfg.skeleton) if cfg.skeleton else Skeleton()


# --- synth ----------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = _config(args)
    tc = cfg.train
    skeleton = _skeleton(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    num = args.num if args.num is not None else tc.num_sequences
    entries = []
    for i in range(num):
        seq = synth.generate_sequence(tc.profile, tc.seq_len, tc.fps, synth.example_rng(cfg.seed, i), skeleton)
        ex = synth.make_training_example(seq, skeleton, cfg.camera, tc.noise, tc.augment,
                                         synth.example_rng(cfg.seed, i, 0))
        initial = synth.estimate_to_sequence(ex.gt_sequence, skeleton, ex.init_estimate)
        names = {kind: f"seq_{i:04d}_{kind}.json" for kind in ("motion", "observation", "initial")}
        io.save_motion(out / names["motion"], ex.gt_sequence, skeleton)
        io.save_observation(out / names["observation"], ex.observation)
        io.save_motion(out / names["initial"], initial, skeleton)
        entries.append(names)
    manifest = {
        "format_version": io.FORMAT_VERSION,
        "seed": cfg.seed,
        "config": config_mod.dump_config(cfg).splitlines(),
        "sequences": entries,
    }
    io.write_json(out / "manifest.json", manifest)
    print(f"wrote {num} sequence(s) to {out}")
    return EXIT_OK


def _dataset_sequences(path) -> list[kinematics.MotionSequence]:
    manifest = io.read_json(Path(path) / "manifest.json")
    try:
        files = [entry["motion"] for entry in manifest["sequences"]]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}/manifest.json: malformed sequence list ({exc!r})") from exc
    return [io.load_motion(Path(path) / name)[0] for name in files]


# --- train ----------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _config(args)
    torch.set_num_threads(args.threads)
    skeleton = _skeleton(cfg)
    base = _dataset_sequences(args.data) if args.data else None
    dataset = train.SyntheticDataset(cfg.train, skeleton, cfg.camera, base_sequences=base)
    model_config, state = cfg.model, None
    if args.resume:
        state, model_config = train.load_state(args.resume)
        log.info("resuming at epoch %d", state.epoch)
    out = Path(args.out)
    log_path = Path(args.log) if args.log else out.with_suffix(".csv")

    def checkpoint(st):
        train.save_state(out, st, model_config)
        train.write_log(log_path, st.history)

    state = train.fit(dataset, model_config, cfg.train, state=state, max_steps=args.max_steps,
                      on_epoch=checkpoint)
    checkpoint(state)
    last = state.history[-1] if state.history else {}
    print(f"trained to epoch {state.epoch}; skipped {state.skipped} degenerate example(s); "
          f"val AJAE {last.get('val_ajae_deg', float('nan')):.3f} deg")
    return EXIT_OK


# --- refine ---------------------------------------------------------------

def refine_motion(initial: kinematics.MotionSequence, obs: synth.ObservationSequence, skeleton: Skeleton,
                  model_config, params) -> kinematics.MotionSequence:
    """Replace the ankles of ``initial`` with refined ones; other joints are copied."""
    if len(initial) != len(obs):
        raise LengthMismatch(f"initial estimate has {len(initial)} frames, observation {len(obs)}")
    glob = kinematics.relative_to_global(skeleton, initial.rotmats())
    est = [skeleton.index(n) for n in synth.ESTIMATE_JOINTS]
    extra = [skeleton.index(n) for n in synth.COND_JOINTS[:3]]
    result = footmr.refine_sequence(obs, rotmath.rotmat_to_rot6d(glob[:, est]), model_config, params,
                                    extra_global=rotmath.rotmat_to_rot6d(glob[:, extra]))
    rot6d = initial.rot6d.copy()
    rot6d[:, list(skeleton.ankles())] = rotmath.rotmat_to_rot6d(np.asarray(result.relative_ankle))
    return kinematics.MotionSequence(initial.fps, rot6d, initial.trans.copy())


def cmd_refine(args) -> int:
    state, model_config = train.load_state(args.checkpoint)
    obs = io.load_observation(args.observation)
    initial, skeleton = io.load_motion(args.initial)
    skeleton = skeleton or Skeleton()
    refined = refine_motion(initial, obs, skeleton, model_config, state.params)
    io.save_motion(args.out, refined, skeleton)
    print(f"wrote refined motion ({len(refined)} frames) to {args.out}")
    return EXIT_OK


# --- eval -----------------------------------------------------------------

def evaluate_files(pred_path, gt_path, obs_path) -> metrics.EvalReport:
    pred, pred_skel = io.load_motion(pred_path)
    gt, gt_skel = io.load_motion(gt_path)
    obs = io.load_observation(obs_path)
    if pred_skel is not None and gt_skel is not None and io.skeleton_to_dict(pred_skel) != io.skeleton_to_dict(gt_skel):
        raise ShapeMismatch(f"{pred_path} and {gt_path} use different skeletons")
    skeleton = gt_skel or pred_skel or Skeleton()
    if not len(pred) == len(gt) == len(obs):
        raise LengthMismatch(f"frame counts differ: prediction {len(pred)}, ground truth {len(gt)}, "
                             f"observation {len(obs)}")
    return metrics.evaluate_sequence(Path(gt_path).stem, pred, gt, skeleton, obs.camera, obs.bbox)


def cmd_eval(args) -> int:
    report = evaluate_files(args.pred, args.gt, args.observation)
    out = Path(args.out)
    json_path = out if out.suffix == ".json" else out.with_suffix(".json")
    json_path.write_text(report.to_json() + "\n")
    json_path.with_suffix(".csv").write_text(report.to_csv())
    print(json.dumps(report.row(), sort_keys=True))
    return EXIT_OK


# --- plot, gradcheck, ablate ---------------------------------------------

def cmd_plot(args) -> int:
    plot.plot_file(args.input, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = experiments.gradcheck_suite(args.eps)
    worst = 0.0
    for name, err in results.items():
        status = "ok" if err < GRADCHECK_TOL else "FAIL"
        print(f"{name:16s} max relative error {err:.3e}  {status}")
        worst = max(worst, err)
    return EXIT_OK if worst < GRADCHECK_TOL else EXIT_NUMERIC


def cmd_ablate(args) -> int:
    cfg = _config(args)
    variants = args.variants.split(",") if args.variants else list(experiments.OUTPUT_VARIANTS)
    unknown = [v for v in variants if v not in experiments.VARIANTS]
    if unknown:
        raise UsageError(f"unknown variant(s) {unknown}; choose from {sorted(experiments.VARIANTS)}")
    seeds = [int(s) for s in args.seeds.split(",")]
    torch.set_num_threads(args.threads)
    rows = experiments.ablate(cfg, variants, seeds)
    experiments.write_ablation(args.out, rows)
    for row in rows:
        print(f"seed {row['seed']} {row['variant']:24s} val AJAE {row['val_ajae_deg']:.3f} "
              f"margin {row['margin_vs_reference_deg']:+.3f}")
    if "residual_relative" in variants and experiments.REFERENCE in variants:
        wins, total = experiments.reference_wins(rows)
        print(f"{experiments.REFERENCE} beats residual_relative in {wins}/{total} seed(s)")
    return EXIT_OK


# --- argument parsing -----------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="footlift", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    add = sub.add_parser

    def add_parser(name, **kw):
        return add(name, parents=[common], **kw)

    sub.add_parser = add_parser

    def with_config(p, default_preset="desk"):
        p.add_argument("--preset", choices=sorted(config_mod.PRESETS), default=default_preset)
        p.add_argument("--config", help="key = value config file applied on top of the preset")

    p = sub.add_parser("synth", help="write motion/observation/initial-estimate files")
    with_config(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--num", type=int, help="number of sequences (default: train.num_sequences)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a refinement model")
    with_config(p)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="CSV log path (default: checkpoint path with .csv)")
    p.add_argument("--data", help="dataset directory from `synth` (default: generate on the fly)")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--max-steps", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("refine", help="refine the ankles of an initial estimate")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--observation", required=True)
    p.add_argument("--initial", required=True, help="initial-estimate motion file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("eval", help="score a motion against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--observation", required=True, help="observation file providing the person boxes")
    p.add_argument("--out", required=True, help="report path; a .csv is written next to the .json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render a training log or eval report")
    p.add_argument("input", help="training-log CSV or eval report JSON")
    p.add_argument("out", help=".svg or .csv output")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("gradcheck", help="finite-difference check of every op and the tiny model")
    p.add_argument("--eps", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train the variant grid and write a comparison CSV")
    with_config(p, "ablate")
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--variants", help=f"comma-separated subset of {','.join(experiments.VARIANTS)}")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"footlift: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateInput as exc:
        print(f"footlift: numeric degeneration: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FootliftError, OSError) as exc:
        print(f"footlift: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
