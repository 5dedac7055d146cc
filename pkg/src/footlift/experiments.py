"""Small experiments: the overfit check, the ablation grid and the gradient checks."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, replace

import numpy as np
import torch

from footlift import footmr, nn, rotmath, train
from footlift.config import Config, ModelConfig, TrainConfig

log = logging.getLogger(__name__)

# name -> (model overrides, train overrides).  Output-representation variants
# first, then the input-joint variants; "residual_global" is the reference.
VARIANTS = {
    "relative": ({"output_mode": "relative"}, {}),
    "global": ({"output_mode": "global"}, {}),
    "residual_relative": ({"output_mode": "residual_relative"}, {}),
    "residual_global": ({}, {}),
    "residual_global_no_aug": ({}, {"augment": False}),
    "inputs_none": ({"input_joints": ()}, {}),
    "inputs_ankle": ({"input_joints": ("ankle",)}, {}),
    "inputs_hip_knee_ankle": ({"input_joints": ("hip", "knee", "ankle")}, {}),
    "inputs_all": ({"input_joints": ("pelvis", "hip", "knee", "ankle")}, {}),
}
REFERENCE = "residual_global"
OUTPUT_VARIANTS = ("relative", "global", "residual_relative", "residual_global", "residual_global_no_aug")

ABLATE_COLUMNS = ("variant", "seed", "output_mode", "input_joints", "augment", "initial_ajae_deg",
                  "val_ajae_deg", "margin_vs_reference_deg", "seconds")


def variant_config(cfg: Config, name: str) -> Config:
    model_over, train_over = VARIANTS[name]
    base = {"output_mode": cfg.model.output_mode, "input_joints": cfg.model.input_joints}
    model = replace(cfg.model, **{**base, **model_over})
    return replace(cfg, model=model, train=replace(cfg.train, **train_over))


def run_variant(cfg: Config, name: str) -> dict:
    vcfg = variant_config(cfg, name)
    start = time.perf_counter()
    dataset = train.SyntheticDataset(vcfg.train, cam=vcfg.camera)
    state = train.fit(dataset, vcfg.model, vcfg.train)
    val = train.evaluate_ajae(dataset.val_examples, vcfg.model, state.params, dataset.skeleton)
    return {
        "variant": name,
        "seed": vcfg.seed,
        "output_mode": vcfg.model.output_mode,
        "input_joints": "+".join(vcfg.model.input_joints) or "none",
        "augment": vcfg.train.augment,
        "initial_ajae_deg": train.initial_ajae(dataset.val_examples),
        "val_ajae_deg": val,
        "seconds": time.perf_counter() - start,
    }


def ablate(cfg: Config, variants, seeds) -> list[dict]:
    """Train every variant for every seed.

    The margin column is ``variant AJAE - reference AJAE`` for the same
    seed, so a positive margin means the reference did better.
    """
    rows = []
    for seed in seeds:
        scfg = cfg.with_seed(seed)
        per_seed = []
        for name in variants:
            row = run_variant(scfg, name)
            log.info("seed %d %s: val AJAE %.3f (initial %.3f)", seed, name, row["val_ajae_deg"],
                     row["initial_ajae_deg"])
            per_seed.append(row)
        ref = next((r["val_ajae_deg"] for r in per_seed if r["variant"] == REFERENCE), math.nan)
        for row in per_seed:
            row["margin_vs_reference_deg"] = row["val_ajae_deg"] - ref
        rows.extend(per_seed)
    return rows


def reference_wins(rows: list[dict], rival: str = "residual_relative") -> tuple[int, int]:
    """(seeds where the reference beat ``rival``, seeds compared)."""
    wins = [r["margin_vs_reference_deg"] > 0 for r in rows if r["variant"] == rival]
    return sum(wins), len(wins)


def write_ablation(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(ABLATE_COLUMNS), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{row[k]:.6f}" if isinstance(row[k], float) else row[k])
                             for k in ABLATE_COLUMNS})


@dataclass
class OverfitResult:
    initial_ajae_deg: float
    final_ajae_deg: float
    steps: int
    seconds: float
    history: list


def overfit(cfg: Config, max_steps: int = 2000, target_deg: float = 5.0) -> OverfitResult:
    """Fit a frozen set of examples until training AJAE is below ``target_deg``."""
    start = time.perf_counter()
    dataset = train.SyntheticDataset(cfg.train, cam=cfg.camera)
    examples = dataset.epoch_examples(0)
    initial = train.initial_ajae(examples)
    state = train.fit(dataset, cfg.model, cfg.train, max_steps=max_steps, stop_below_deg=target_deg)
    final = train.evaluate_ajae(examples, cfg.model, state.params, dataset.skeleton)
    steps = state.opt_state.get("step", 0)
    return OverfitResult(initial, final, steps, time.perf_counter() - start, state.history)


def half_normal_mean_deg(sigma_deg: float) -> float:
    """Expected angle of a half-normal draw with scale ``sigma_deg``."""
    return sigma_deg * float(np.sqrt(2.0 / np.pi))


# --- gradient checks ------------------------------------------------------

def _weighted_sum(y: torch.Tensor, seed: int) -> torch.Tensor:
    """Scalar probe with fixed random weights, so every output entry matters."""
    w = torch.as_tensor(np.random.default_rng(seed).standard_normal(tuple(y.shape)), dtype=nn.DTYPE)
    return (y * w).sum()


def _gradcheck_cases(L: int = 8, d: int = 16, heads: int = 2):
    """(name, params, scalar function) for each op and for the tiny model."""
    rng = np.random.default_rng(7)
    x = rng.standard_normal((L, d))
    mask = nn.banded_mask(L, 2)
    cases = []

    def add(name, arrays, f):
        cases.append((name, nn.to_params(arrays), f))

    w, b = rng.standard_normal((d, 5)), rng.standard_normal(5)
    add("linear", {"x": x, "w": w, "b": b}, lambda p: _weighted_sum(nn.linear(p["x"], p["w"], p["b"]), 1))
    add("gelu", {"x": x}, lambda p: _weighted_sum(nn.gelu(p["x"]), 2))
    add("layer_norm", {"x": x, "g": 1 + 0.1 * rng.standard_normal(d), "b": 0.1 * rng.standard_normal(d)},
        lambda p: _weighted_sum(nn.layer_norm(p["x"], p["g"], p["b"]), 3))
    add("mlp", {"x": x, **nn.init_mlp(rng, "m", d, 2 * d, d)}, lambda p: _weighted_sum(nn.mlp(p["x"], p, "m"), 4))
    add("rope", {"x": rng.standard_normal((L, heads, d // heads))},
        lambda p: _weighted_sum(nn.rope_apply(p["x"]), 5))
    qk = {"q": rng.standard_normal((L, heads, d // heads)), "k": rng.standard_normal((L, heads, d // heads))}
    add("attention", qk, lambda p: _weighted_sum(nn.attention_weights(p["q"], p["k"], mask), 6))
    add("mha", {"x": x, **nn.init_mha(rng, "a", d)},
        lambda p: _weighted_sum(nn.mha(p["x"], mask, p, "a", heads), 7))
    add("encoder_layer", {"x": x, **nn.init_encoder_layer(rng, "e", d)},
        lambda p: _weighted_sum(nn.encoder_layer(p["x"], mask, p, "e", heads), 8))
    add("rot6d_to_rotmat", {"r": rng.standard_normal((L, 6))},
        lambda p: _weighted_sum(rotmath.rot6d_to_rotmat(p["r"]), 9))

    model = ModelConfig(d_h=d, layers=2, heads=heads, window=2)
    tc = TrainConfig(seq_len=L, num_sequences=1, val_sequences=0, batch_size=1)
    dataset = train.SyntheticDataset(tc)
    batch = train.collate(dataset.epoch_examples(0))
    params = footmr.init_params(model, seed=0, zero_head=False)
    arrays = {k: v.detach().numpy() for k, v in params.items()}
    add("footmr_loss", arrays,
        lambda p: train.batch_forward(batch, model, p, tc.loss_weights, dataset.skeleton).total)
    return cases


def gradcheck_suite(eps: float = 1e-5, names=None) -> dict[str, float]:
    """Worst relative autograd-vs-central-difference error per op."""
    out = {}
    for name, params, f in _gradcheck_cases():
        if names is None or name in names:
            out[name] = nn.grad_check(f, params, eps)
    return out
