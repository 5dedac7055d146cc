"""Losses and the training loop.

Each loss is a per-frame mean so the weights do not depend on sequence
length.  2D losses live in box-normalized coordinates.  The 3D and 2D
terms place the refined ankles into the ground-truth body: knees and
everything above them keep their true rotations, so only the forefoot
joints and the foot markers move.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from footlift import camera, footmr, kinematics, nn, rotmath, synth
from footlift.config import ModelConfig, TrainConfig
from footlift.errors import DegenerateInput, ShapeMismatch
from footlift.kinematics import Skeleton

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "lr", "loss_total", "loss_theta", "loss_j3d", "loss_j2d", "loss_v3d",
               "loss_v2d", "train_ajae_deg", "val_ajae_deg")
LOSS_TERMS = ("theta", "j3d", "j2d", "v3d", "v2d")


def _t(x):
    return torch.as_tensor(x, dtype=nn.DTYPE)


def _points(x):
    return x.joint_pos if isinstance(x, kinematics.PoseFK) else x


def loss_j3d(pred_pose, gt_pose) -> torch.Tensor:
    """Mean Euclidean joint distance (meters); accepts PoseFK or (..., J, 3) arrays."""
    return torch.linalg.norm(_t(_points(pred_pose)) - _t(_points(gt_pose)), dim=-1).mean()


def loss_j2d(pred_points3d, gt_points2d, cam, bbox, visibility=None) -> torch.Tensor:
    """Mean box-normalized reprojection error over visible points; 0 if none are visible."""
    pred = camera.normalize_keypoints(camera.project(_t(_points(pred_points3d)), cam), _t(bbox))
    gt = camera.normalize_keypoints(_t(gt_points2d), _t(bbox))
    dist = torch.linalg.norm(pred - gt, dim=-1)
    if visibility is None:
        return dist.mean()
    vis = torch.as_tensor(visibility, dtype=torch.bool)
    if not bool(vis.any()):
        return dist.sum() * 0.0
    return dist[vis].mean()


def loss_v3d(pred_markers, gt_markers) -> torch.Tensor:
    return loss_j3d(pred_markers, gt_markers)


def loss_v2d(pred_markers, gt_markers2d, cam, bbox, visibility=None) -> torch.Tensor:
    return loss_j2d(pred_markers, gt_markers2d, cam, bbox, visibility)


def loss_theta(init_rots, refined_rots, gt_rots) -> torch.Tensor:
    """Half the sum of mean 6D errors of the initial and the refined ankle rotations."""
    init_rots, refined_rots, gt_rots = _t(init_rots), _t(refined_rots), _t(gt_rots)
    if not init_rots.shape == refined_rots.shape == gt_rots.shape:
        raise ShapeMismatch("loss_theta inputs must share one shape")
    init_err = torch.linalg.norm(init_rots - gt_rots, dim=-1).mean()
    refined_err = torch.linalg.norm(refined_rots - gt_rots, dim=-1).mean()
    return 0.5 * (init_err + refined_err)


# --- batches --------------------------------------------------------------

@dataclass
class Batch:
    foot2d: torch.Tensor  # (B, L, 16)
    bbox_feat: torch.Tensor  # (B, L, 3)
    cond_global: torch.Tensor  # (B, L, 5, 6)
    init_ankle: torch.Tensor  # (B, L, 2, 6)
    target_rel: torch.Tensor  # (B, L, 2, 6)
    target_global: torch.Tensor  # (B, L, 2, 6)
    gt_rel_rot: torch.Tensor  # (B, L, J, 3, 3)
    trans: torch.Tensor  # (B, L, 3)
    gt_joints2d: torch.Tensor  # (B, L, J, 2)
    gt_markers2d: torch.Tensor  # (B, L, 8, 2)
    bbox: torch.Tensor  # (B, L, 3)
    cam: camera.CameraIntrinsics
    gt_joint_pos: torch.Tensor  # (B, L, J, 3)
    gt_markers: torch.Tensor  # (B, L, 8, 3)

    def __len__(self) -> int:
        return self.foot2d.shape[0]

    def select(self, keep: list[int]) -> "Batch":
        fields = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        return Batch(**{k: (v[keep] if isinstance(v, torch.Tensor) else v) for k, v in fields.items()})


def collate(examples: list[synth.TrainingExample]) -> Batch:
    cams = {ex.camera for ex in examples}
    if len(cams) != 1:
        raise ShapeMismatch("a batch must share one camera")

    def stack(get):
        return _t(np.stack([get(ex) for ex in examples]))

    gt_rel_rot = stack(lambda e: e.gt_sequence.rotmats())
    trans = stack(lambda e: e.gt_sequence.trans)
    skeleton = examples[0].skeleton or Skeleton()
    gt = kinematics.forward_kinematics(skeleton, gt_rel_rot, trans)
    return Batch(
        foot2d=stack(lambda e: e.foot2d),
        bbox_feat=stack(lambda e: e.bbox_feat),
        cond_global=stack(lambda e: e.cond_global),
        init_ankle=stack(lambda e: e.init_global_ankle),
        target_rel=stack(lambda e: e.target_rel_ankle),
        target_global=stack(lambda e: e.target_global_ankle),
        gt_rel_rot=gt_rel_rot,
        trans=trans,
        gt_joints2d=stack(lambda e: e.gt_joints2d),
        gt_markers2d=stack(lambda e: e.gt_markers2d),
        bbox=stack(lambda e: e.observation.bbox),
        cam=cams.pop(),
        gt_joint_pos=gt.joint_pos,
        gt_markers=kinematics.foot_keypoints_3d(gt, skeleton),
    )


@dataclass
class StepOutput:
    total: torch.Tensor
    terms: dict[str, torch.Tensor]
    global_ankle: torch.Tensor  # (B, L, 2, 3, 3)
    relative_ankle: torch.Tensor


def total_loss(batch: Batch, delta: torch.Tensor, model_config: ModelConfig, weights: dict[str, float],
               skeleton: Skeleton) -> StepOutput:
    """Weighted sum of the five loss terms for network output ``delta`` (B, L, 2, 6).

    The initial ankle rotations are detached, so no gradient reaches them.
    """
    init = batch.init_ankle.detach()
    knee = rotmath.rot6d_to_rotmat(batch.cond_global[..., 3:5, :])
    glob, rel = footmr.apply_output(delta, init, knee, model_config.output_mode)

    la, ra = skeleton.ankles()
    rots = list(batch.gt_rel_rot.unbind(-3))
    rots[la], rots[ra] = rel[..., 0, :, :], rel[..., 1, :, :]
    pred = kinematics.forward_kinematics(skeleton, torch.stack(rots, dim=-3), batch.trans)
    pred_markers = kinematics.foot_keypoints_3d(pred, skeleton)

    init_rel = rotmath.rotmat_to_rot6d(knee.mT @ rotmath.rot6d_to_rotmat(init))
    terms = {
        "theta": loss_theta(init_rel, rotmath.rotmat_to_rot6d(rel), batch.target_rel),
        "j3d": loss_j3d(pred.joint_pos, batch.gt_joint_pos),
        "j2d": loss_j2d(pred.joint_pos, batch.gt_joints2d, batch.cam, batch.bbox),
        "v3d": loss_v3d(pred_markers, batch.gt_markers),
        "v2d": loss_v2d(pred_markers, batch.gt_markers2d, batch.cam, batch.bbox),
    }
    total = sum(weights[k] * terms[k] for k in LOSS_TERMS)
    return StepOutput(total, terms, glob, rel)


def batch_forward(batch: Batch, model_config: ModelConfig, params: nn.Params, weights, skeleton):
    inp = footmr.build_input(batch.foot2d, batch.bbox_feat, batch.cond_global, batch.init_ankle.detach(),
                             model_config.input_joints)
    delta = footmr.forward(inp, model_config, params)
    return total_loss(batch, delta, model_config, weights, skeleton)


def _ajae_sum(out: StepOutput, batch: Batch) -> tuple[float, int]:
    pred = out.global_ankle.detach()
    gt = rotmath.rot6d_to_rotmat(batch.target_global)
    ang = rotmath.geodesic_angle_deg(pred, gt)
    return float(ang.sum()), ang.numel()


# --- dataset --------------------------------------------------------------

@dataclass
class SyntheticDataset:
    """Base motions generated once; examples are re-synthesized per epoch on demand.

    ``base_sequences`` replaces the generated training motions (e.g. ones read
    from a dataset directory).
    """

    train_config: TrainConfig
    skeleton: Skeleton = field(default_factory=Skeleton)
    cam: camera.CameraIntrinsics = field(default_factory=camera.CameraIntrinsics)
    base_sequences: list | None = None

    def __post_init__(self):
        tc = self.train_config
        if self.base_sequences is not None:
            self.sequences = list(self.base_sequences)
        else:
            self.sequences = [
                synth.generate_sequence(tc.profile, tc.seq_len, tc.fps, synth.example_rng(tc.seed, i),
                                        self.skeleton)
                for i in range(tc.num_sequences)
            ]
        self.val_examples = []
        for i in range(tc.val_sequences):
            # validation uses randomized root orientations regardless of the augment flag,
            # and conditions on estimated knees like inference does
            seq = synth.generate_sequence(tc.val_profile, tc.seq_len, tc.fps,
                                          synth.example_rng(tc.seed, 1_000_000 + i), self.skeleton)
            self.val_examples.append(synth.make_training_example(
                seq, self.skeleton, self.cam, tc.noise, True, synth.example_rng(tc.seed, 1_000_000 + i, 0),
                estimated_knees=tc.val_estimated_knees))
        self._frozen = None

    def __len__(self) -> int:
        return len(self.sequences)

    def epoch_examples(self, epoch: int) -> list[synth.TrainingExample]:
        tc = self.train_config
        if not tc.resample_per_epoch and self._frozen is not None:
            return self._frozen
        key = epoch if tc.resample_per_epoch else 0
        out = [synth.make_training_example(seq, self.skeleton, self.cam, tc.noise, tc.augment,
                                           synth.example_rng(tc.seed, i, key))
               for i, seq in enumerate(self.sequences)]
        if not tc.resample_per_epoch:
            self._frozen = out
        return out


def _refined_angles(examples, model_config: ModelConfig, params: nn.Params) -> torch.Tensor:
    batch = collate(examples)
    inp = footmr.build_input(batch.foot2d, batch.bbox_feat, batch.cond_global, batch.init_ankle,
                             model_config.input_joints)
    delta = footmr.forward(inp, model_config, params)
    knee = rotmath.rot6d_to_rotmat(batch.cond_global[..., 3:5, :])
    glob, _ = footmr.apply_output(delta, batch.init_ankle, knee, model_config.output_mode)
    return rotmath.geodesic_angle_deg(glob, rotmath.rot6d_to_rotmat(batch.target_global))


def evaluate_ajae(examples, model_config: ModelConfig, params: nn.Params, skeleton: Skeleton,
                  batch_size: int = 16) -> float:
    """AJAE of the refined ankles over a list of examples; degenerate outputs are left out."""
    total, count = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(examples), batch_size):
            chunk = examples[start:start + batch_size]
            try:
                parts = [_refined_angles(chunk, model_config, params)]
            except DegenerateInput:
                parts = []
                for ex in chunk:
                    try:
                        parts.append(_refined_angles([ex], model_config, params))
                    except DegenerateInput:
                        log.warning("evaluation skipped a degenerate example")
            for ang in parts:
                total += float(ang.sum())
                count += ang.numel()
    return total / count if count else math.nan


def initial_ajae(examples) -> float:
    """AJAE of the unrefined initial ankles."""
    angles = [rotmath.geodesic_angle_deg(rotmath.rot6d_to_rotmat(ex.init_global_ankle),
                                         rotmath.rot6d_to_rotmat(ex.target_global_ankle))
              for ex in examples]
    return float(np.mean(angles))


# --- fitting --------------------------------------------------------------

@dataclass
class FitState:
    params: nn.Params
    opt_state: dict
    epoch: int = 0
    skipped: int = 0
    history: list[dict] = field(default_factory=list)


def _run_batch(batch, model_config, params, weights, skeleton):
    """Forward a batch, dropping examples whose refined 6D output is degenerate."""
    try:
        return batch_forward(batch, model_config, params, weights, skeleton), batch, 0
    except DegenerateInput:
        keep = []
        for i in range(len(batch)):
            try:
                with torch.no_grad():
                    batch_forward(batch.select([i]), model_config, params, weights, skeleton)
                keep.append(i)
            except DegenerateInput:
                pass
        dropped = len(batch) - len(keep)
        log.warning("skipping %d degenerate example(s)", dropped)
        if not keep:
            return None, batch, dropped
        batch = batch.select(keep)
        return batch_forward(batch, model_config, params, weights, skeleton), batch, dropped


def fit(dataset: SyntheticDataset, model_config: ModelConfig, train_config: TrainConfig,
        state: FitState | None = None, max_steps: int | None = None, stop_below_deg: float | None = None,
        on_epoch=None) -> FitState:
    """Minibatch AdamW with stepwise learning-rate halving.

    Resumes from ``state`` when given (epoch numbering continues).  Stops
    after ``train_config.epochs`` total epochs, after ``max_steps`` optimizer
    steps, or once the epoch's training AJAE falls below ``stop_below_deg``.
    """
    tc = train_config
    skeleton = dataset.skeleton
    weights = tc.loss_weights
    if state is None:
        state = FitState(footmr.init_params(model_config, tc.seed), {})
    params = state.params
    for p in params.values():
        p.requires_grad_(True)
    steps = state.opt_state.get("step", 0)
    while state.epoch < tc.epochs:
        epoch = state.epoch
        lr = tc.lr_at(epoch)
        examples = dataset.epoch_examples(epoch)
        order = np.random.default_rng([tc.seed, epoch, 0x5EED]).permutation(len(examples))
        sums = dict.fromkeys(("total",) + LOSS_TERMS, 0.0)
        n_seen, ajae_sum, ajae_n = 0, 0.0, 0
        for start in range(0, len(order), tc.batch_size):
            batch = collate([examples[i] for i in order[start:start + tc.batch_size]])
            out, batch, dropped = _run_batch(batch, model_config, params, weights, skeleton)
            state.skipped += dropped
            if out is None:
                continue
            for p in params.values():
                p.grad = None
            out.total.backward()
            nn.adamw_step(params, {k: p.grad for k, p in params.items()}, state.opt_state, lr,
                          weight_decay=tc.weight_decay)
            steps += 1
            b = len(batch)
            n_seen += b
            sums["total"] += float(out.total.detach()) * b
            for k in LOSS_TERMS:
                sums[k] += float(out.terms[k].detach()) * b
            s, n = _ajae_sum(out, batch)
            ajae_sum += s
            ajae_n += n
            if max_steps is not None and steps >= max_steps:
                break
        row = {"epoch": epoch, "lr": lr}
        row["loss_total"] = sums["total"] / max(n_seen, 1)
        for k in LOSS_TERMS:
            row[f"loss_{k}"] = sums[k] / max(n_seen, 1)
        row["train_ajae_deg"] = ajae_sum / ajae_n if ajae_n else math.nan
        row["val_ajae_deg"] = evaluate_ajae(dataset.val_examples, model_config, params, skeleton)
        state.history.append(row)
        state.epoch += 1
        log.info("epoch %d lr %.3g loss %.5g train AJAE %.3f val AJAE %.3f", epoch, lr,
                 row["loss_total"], row["train_ajae_deg"], row["val_ajae_deg"])
        if on_epoch is not None:
            on_epoch(state)
        if max_steps is not None and steps >= max_steps:
            break
        if stop_below_deg is not None and row["train_ajae_deg"] < stop_below_deg:
            break
    return state


def write_log(path, history: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(LOG_COLUMNS), lineterminator="\n")
        writer.writeheader()
        for row in history:
            writer.writerow({k: (repr(float(row[k])) if k != "epoch" else row[k]) for k in LOG_COLUMNS})


def read_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "epoch" else float(v)) for k, v in r.items()} for r in rows]


# --- checkpoints ----------------------------------------------------------

def save_state(path, state: FitState, model_config: ModelConfig) -> None:
    tensors = dict(state.params)
    for kind in ("m", "v"):
        for name, t in state.opt_state.get(kind, {}).items():
            tensors[f"adam.{kind}.{name}"] = t
    meta = {
        "model": dataclasses.asdict(model_config),
        "epoch": state.epoch,
        "step": state.opt_state.get("step", 0),
        "skipped": state.skipped,
        "history": state.history,
    }
    nn.save_checkpoint(path, tensors, meta)


def load_state(path) -> tuple[FitState, ModelConfig]:
    tensors, meta = nn.load_checkpoint(path)
    model = meta["model"]
    model["input_joints"] = tuple(model["input_joints"])
    model_config = ModelConfig(**model)
    params, m, v = {}, {}, {}
    for name, t in tensors.items():
        if name.startswith("adam.m."):
            m[name[len("adam.m."):]] = t
        elif name.startswith("adam.v."):
            v[name[len("adam.v."):]] = t
        else:
            params[name] = t.requires_grad_(True)
    opt_state = {"step": meta["step"], "m": m, "v": v} if meta["step"] else {}
    return FitState(params, opt_state, meta["epoch"], meta["skipped"], meta["history"]), model_config
