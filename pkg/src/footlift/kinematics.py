"""Reduced lower-body kinematic tree and forward kinematics."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import torch

from footlift import rotmath

JOINT_NAMES = (
    "pelvis", "l_hip", "r_hip", "l_knee", "r_knee",
    "l_ankle", "r_ankle", "l_foot", "r_foot",
)
MARKER_NAMES = ("big_toe", "small_toe", "heel", "ankle")
SIDES = ("l", "r")


def _default_offsets() -> np.ndarray:
    # body frame: x forward, y left, z up; meters
    return np.array([
        [0.0, 0.0, 0.0],
        [0.0, 0.10, 0.0],
        [0.0, -0.10, 0.0],
        [0.0, 0.0, -0.42],
        [0.0, 0.0, -0.42],
        [0.0, 0.0, -0.43],
        [0.0, 0.0, -0.43],
        [0.196, 0.0, -0.04],
        [0.196, 0.0, -0.04],
    ])


def _default_markers() -> np.ndarray:
    left = np.array([
        [0.19, 0.0, -0.04],
        [0.15, 0.05, -0.04],
        [-0.06, 0.0, -0.04],
        [0.0, 0.0, 0.0],
    ])
    right = left * np.array([1.0, -1.0, 1.0])
    return np.stack([left, right])


@dataclass(frozen=True)
class Skeleton:
    """Kinematic chain with rest offsets and per-foot surface markers.

    ``offsets[i]`` is the rest position of joint ``i`` in its parent's frame;
    ``foot_markers[side, k]`` is marker ``k`` in the ankle's local frame.
    """

    names: tuple[str, ...] = JOINT_NAMES
    parents: tuple[int, ...] = (-1, 0, 0, 1, 2, 3, 4, 5, 6)
    offsets: np.ndarray = field(default_factory=_default_offsets)
    foot_markers: np.ndarray = field(default_factory=_default_markers)

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.float64)
        markers = np.asarray(self.foot_markers, dtype=np.float64)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "foot_markers", markers)
        if tuple(self.names) != JOINT_NAMES:
            raise ValueError(f"skeleton joints must be {JOINT_NAMES}")
        if self.parents[0] != -1 or any(not 0 <= p < i for i, p in enumerate(self.parents) if i):
            raise ValueError("parents must be topologically ordered with a single root")
        if offsets.shape != (len(self.names), 3) or not np.all(np.isfinite(offsets)):
            raise ValueError("offsets must be a finite (J, 3) array")
        if markers.shape != (2, 4, 3) or not np.all(np.isfinite(markers)):
            raise ValueError("foot_markers must be a finite (2, 4, 3) array")

    @property
    def num_joints(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def ankles(self) -> tuple[int, int]:
        return self.index("l_ankle"), self.index("r_ankle")

    def knees(self) -> tuple[int, int]:
        return self.index("l_knee"), self.index("r_knee")


@dataclass(frozen=True)
class MotionSequence:
    """Per-frame parent-relative 6D rotations (root = camera-frame orientation)
    and camera-space root translation."""

    fps: float
    rot6d: np.ndarray  # (L, J, 6)
    trans: np.ndarray  # (L, 3)

    def __post_init__(self):
        rot6d = np.asarray(self.rot6d, dtype=np.float64)
        trans = np.asarray(self.trans, dtype=np.float64)
        object.__setattr__(self, "rot6d", rot6d)
        object.__setattr__(self, "trans", trans)
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if rot6d.ndim != 3 or rot6d.shape[-1] != 6 or rot6d.shape[0] < 1:
            raise ValueError(f"rot6d must be (L, J, 6), got {rot6d.shape}")
        if trans.shape != (rot6d.shape[0], 3):
            raise ValueError(f"trans must be (L, 3), got {trans.shape}")

    def __len__(self) -> int:
        return self.rot6d.shape[0]

    def rotmats(self) -> np.ndarray:
        return rotmath.rot6d_to_rotmat(self.rot6d)


@dataclass(frozen=True)
class PoseFK:
    global_rot: np.ndarray  # (..., J, 3, 3)
    joint_pos: np.ndarray  # (..., J, 3)


def _stack(xs, axis):
    if isinstance(xs[0], torch.Tensor):
        return torch.stack(xs, dim=axis)
    return np.stack(xs, axis=axis)


def relative_to_global(skeleton: Skeleton, rel_rots):
    """Chain parent-relative rotations (..., J, 3, 3) root-first into global ones."""
    out = []
    for i, p in enumerate(skeleton.parents):
        r = rel_rots[..., i, :, :]
        out.append(r if p < 0 else out[p] @ r)
    return _stack(out, -3)


def global_to_relative(global_child, global_parent):
    return global_parent.mT @ global_child


def forward_kinematics(skeleton: Skeleton, rel_rots, trans) -> PoseFK:
    """Global rotations and joint positions for (..., J, 3, 3) rotations and (..., 3) roots."""
    glob = relative_to_global(skeleton, rel_rots)
    offsets = skeleton.offsets
    if isinstance(glob, torch.Tensor):
        offsets = torch.as_tensor(offsets, dtype=glob.dtype)
    pos = []
    for i, p in enumerate(skeleton.parents):
        if p < 0:
            pos.append(trans)
        else:
            pos.append(pos[p] + (glob[..., p, :, :] @ offsets[i][:, None])[..., 0])
    return PoseFK(glob, _stack(pos, -2))


def sequence_fk(skeleton: Skeleton, seq: MotionSequence) -> PoseFK:
    return forward_kinematics(skeleton, seq.rotmats(), seq.trans)


def foot_keypoints_3d(pose: PoseFK, skeleton: Skeleton):
    """Eight foot markers (..., 8, 3): left big toe, small toe, heel, ankle, then right."""
    ankles = list(skeleton.ankles())
    markers = skeleton.foot_markers  # (2, 4, 3) in each ankle's frame
    R = pose.global_rot[..., ankles, :, :]
    origin = pose.joint_pos[..., ankles, :]
    if isinstance(R, torch.Tensor):
        pts = torch.einsum("...sij,skj->...ski", R, torch.as_tensor(markers, dtype=R.dtype))
    else:
        pts = np.einsum("...sij,skj->...ski", R, markers)
    pts = pts + origin[..., :, None, :]
    return pts.reshape(pts.shape[:-3] + (2 * len(MARKER_NAMES), 3))


def apply_root_augmentation(seq: MotionSequence, R: np.ndarray) -> MotionSequence:
    """Left-multiply the root orientation of every frame by R; translation is kept."""
    rot6d = seq.rot6d.copy()
    root = rotmath.rot6d_to_rotmat(seq.rot6d[:, 0])
    rot6d[:, 0] = rotmath.rotmat_to_rot6d(np.asarray(R) @ root)
    return replace(seq, rot6d=rot6d)
