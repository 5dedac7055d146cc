"""Foot motion refinement network.

Three per-frame feature streams (box-normalized foot keypoints, box
features, global 6D rotations of the conditioning joints) are embedded by
separate MLPs, summed into one token per frame, passed through a stack of
rotary-embedding encoder layers with a banded attention mask, and decoded
into a 12-vector per frame: one 6D correction for each ankle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from footlift import nn, rotmath
from footlift.config import ModelConfig
from footlift.errors import ShapeMismatch
from footlift.synth import COND_JOINTS, ObservationSequence

IDENTITY_6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
# (group, indices into COND_JOINTS); ankles come from the initial estimate
_COND_INDEX = {"pelvis": [0], "hip": [1, 2], "knee": [3, 4]}


@dataclass
class RefineInput:
    """Network inputs, each with shape (..., L, features)."""

    f_foot2d: np.ndarray | torch.Tensor  # (..., L, 16)
    f_bbox: np.ndarray | torch.Tensor  # (..., L, 3)
    f_rot: np.ndarray | torch.Tensor  # (..., L, 6 * joints)

    def __post_init__(self):
        lengths = {self.f_foot2d.shape[:-1], self.f_bbox.shape[:-1], self.f_rot.shape[:-1]}
        if len(lengths) != 1:
            raise ShapeMismatch(f"feature streams disagree on leading shape: {sorted(lengths)}")
        if self.f_foot2d.shape[-1] != 16 or self.f_bbox.shape[-1] != 3 or self.f_rot.shape[-1] % 6:
            raise ShapeMismatch("expected 16 keypoint, 3 box and 6k rotation features per frame")

    def __len__(self) -> int:
        return self.f_foot2d.shape[-2]

    def tensors(self) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        return tuple(torch.as_tensor(x, dtype=nn.DTYPE) for x in (self.f_foot2d, self.f_bbox, self.f_rot))


def rot_feature_width(input_joints) -> int:
    per_group = {"pelvis": 1, "hip": 2, "knee": 2, "ankle": 2}
    return 6 * sum(per_group[g] for g in input_joints)


def build_input(foot2d, bbox_feat, cond_global, init_global_ankle,
                input_joints=("knee", "ankle")) -> RefineInput:
    """Assemble network inputs; ``cond_global`` is (..., L, 5, 6) in COND_JOINTS order.

    Rotation features are ordered down the chain: pelvis, hips, knees, ankles.
    """
    parts = []
    for group in ("pelvis", "hip", "knee"):
        if group in input_joints:
            parts.append(cond_global[..., _COND_INDEX[group], :])
    if "ankle" in input_joints:
        parts.append(init_global_ankle)
    lead = np.shape(foot2d)[:-1]
    if parts:
        if isinstance(parts[0], torch.Tensor):
            f_rot = torch.cat(parts, dim=-2).flatten(-2)
        else:
            f_rot = np.concatenate(parts, axis=-2).reshape(lead + (-1,))
    else:
        f_rot = np.zeros(lead + (0,))
    return RefineInput(foot2d, bbox_feat, f_rot)


def init_params(config: ModelConfig, seed: int = 0, zero_head: bool = True) -> nn.Params:
    """Random parameters; the head's last layer starts at zero (identity refinement).

    For the direct output modes the head bias starts at the identity 6D
    instead, so the initial prediction is a valid rotation.
    """
    rng = np.random.default_rng([seed, 0x666f6f74])
    d = config.d_h
    arrays = {}
    rot_width = rot_feature_width(config.input_joints)
    if rot_width:
        arrays.update(nn.init_mlp(rng, "in_rot", rot_width, d, d))
    arrays.update(nn.init_mlp(rng, "in_kp", 16, d, d))
    arrays.update(nn.init_mlp(rng, "in_bbox", 3, d, d))
    for i in range(config.layers):
        arrays.update(nn.init_encoder_layer(rng, f"enc{i}", d, config.ff_mult))
    arrays["out_ln.g"] = np.ones(d)
    arrays["out_ln.b"] = np.zeros(d)
    arrays.update(nn.init_mlp(rng, "head", d, d, 12, zero_out=zero_head))
    if zero_head and not config.output_mode.startswith("residual"):
        arrays["head.b2"] = np.tile(IDENTITY_6D, 2)
    return nn.to_params(arrays)


def fuse_tokens(inp: RefineInput, params: nn.Params) -> torch.Tensor:
    """Per-frame token: sum of the three stream embeddings."""
    foot2d, bbox, rot = inp.tensors()
    tokens = nn.mlp(foot2d, params, "in_kp") + nn.mlp(bbox, params, "in_bbox")
    if rot.shape[-1]:
        if "in_rot.w1" not in params:
            raise ShapeMismatch("rotation features given but the model has no rotation stream")
        tokens = tokens + nn.mlp(rot, params, "in_rot")
    return tokens


def forward(inp: RefineInput, config: ModelConfig, params: nn.Params, return_weights: bool = False):
    """Per-frame ankle outputs (..., L, 2, 6) in a single pass over the whole sequence."""
    x = fuse_tokens(inp, params)
    mask = nn.banded_mask(len(inp), config.half_window)
    weights = []
    for i in range(config.layers):
        x, w = nn.encoder_layer(x, mask, params, f"enc{i}", config.heads, return_weights=True)
        weights.append(w)
    x = nn.layer_norm(x, params["out_ln.g"], params["out_ln.b"])
    delta = nn.mlp(x, params, "head").unflatten(-1, (2, 6))
    return (delta, weights) if return_weights else delta


def apply_output(delta, init_global_ankle, global_knee, mode: str):
    """Combine network output with the initial ankles; returns (global, relative) rotation matrices.

    ``delta`` and ``init_global_ankle`` are (..., 2, 6); ``global_knee`` is
    (..., 2, 3, 3).  Raises DegenerateInput when a summed 6D vector cannot be
    orthonormalized.
    """
    if mode == "residual_global":
        glob = rotmath.rot6d_to_rotmat(init_global_ankle + delta)
        return glob, global_knee.mT @ glob
    if mode == "residual_relative":
        init_rel = rotmath.rotmat_to_rot6d(global_knee.mT @ rotmath.rot6d_to_rotmat(init_global_ankle))
        rel = rotmath.rot6d_to_rotmat(init_rel + delta)
        return global_knee @ rel, rel
    if mode == "global":
        glob = rotmath.rot6d_to_rotmat(delta)
        return glob, global_knee.mT @ glob
    if mode == "relative":
        rel = rotmath.rot6d_to_rotmat(delta)
        return global_knee @ rel, rel
    raise ValueError(f"unknown output mode {mode!r}")


@dataclass
class Refinement:
    global_ankle: np.ndarray  # (L, 2, 3, 3)
    relative_ankle: np.ndarray  # (L, 2, 3, 3)
    delta: np.ndarray  # (L, 2, 6)


def refine_sequence(obs: ObservationSequence, init: np.ndarray, config: ModelConfig,
                    params: nn.Params, extra_global: np.ndarray | None = None) -> Refinement:
    """Refine initial ankles for one sequence.

    ``init`` holds (L, 4, 6) global rotations of l/r knee and l/r ankle.
    ``extra_global`` (L, 3, 6) gives pelvis and hips, needed only when the
    model conditions on them.
    """
    init = np.asarray(init, dtype=np.float64)
    if init.shape != (len(obs), 4, 6):
        raise ShapeMismatch(f"initial estimate must be ({len(obs)}, 4, 6), got {init.shape}")
    if extra_global is None:
        if {"pelvis", "hip"} & set(config.input_joints):
            raise ShapeMismatch("model conditions on pelvis/hips; pass extra_global")
        extra_global = np.tile(IDENTITY_6D, (len(obs), 3, 1))
    cond = np.concatenate([extra_global, init[:, :2]], axis=1)
    inp = build_input(obs.foot2d_features(), obs.bbox_features(), cond, init[:, 2:], config.input_joints)
    with torch.no_grad():
        delta = forward(inp, config, params).numpy()
    knee = rotmath.rot6d_to_rotmat(init[:, :2])
    glob, rel = apply_output(delta, init[:, 2:], knee, config.output_mode)
    return Refinement(glob, rel, delta)
