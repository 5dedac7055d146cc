"""Procedural motion and the training-pair factory.

Ground-truth motion is a sum of per-joint sinusoidal rotation-vector
trajectories; observations are projected foot markers with pixel noise and
random dropout; initial estimates are ground-truth global knee/ankle
rotations with a per-sequence bias and per-frame jitter.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from footlift import camera, kinematics, rotmath
from footlift.camera import CameraIntrinsics
from footlift.kinematics import MotionSequence, Skeleton

# body frame (x forward, y left, z up) -> camera frame (x right, y down, z forward),
# subject facing the camera
FACING_CAMERA = np.array([
    [0.0, 1.0, 0.0],
    [0.0, 0.0, -1.0],
    [-1.0, 0.0, 0.0],
])
ESTIMATE_JOINTS = ("l_knee", "r_knee", "l_ankle", "r_ankle")
COND_JOINTS = ("pelvis", "l_hip", "r_hip", "l_knee", "r_knee")
BBOX_PAD = 0.2


@dataclass(frozen=True)
class NoiseConfig:
    kp_sigma_px: float = 3.0
    drop_prob: float = 0.05
    init_rot_sigma_deg: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError("drop_prob must lie in [0, 1]")
        if self.kp_sigma_px < 0 or self.init_rot_sigma_deg < 0:
            raise ValueError("noise scales must be non-negative")


@dataclass(frozen=True)
class MotionProfile:
    """Amplitude limits (degrees) per joint group and motion tempo."""

    name: str
    hip_deg: float
    knee_deg: float
    ankle_deg: float
    freq_hz: tuple[float, float] = (0.2, 1.0)
    components: int = 2
    yaw_range_deg: float = 60.0
    root_walk_deg: float = 5.0
    trans_sway_m: float = 0.1
    depth_m: tuple[float, float] = (2.0, 5.0)


PROFILES = {
    "everyday": MotionProfile("everyday", hip_deg=30.0, knee_deg=30.0, ankle_deg=15.0),
    "complex-foot": MotionProfile("complex-foot", hip_deg=40.0, knee_deg=40.0, ankle_deg=70.0,
                                  freq_hz=(0.1, 0.8)),
    "static": MotionProfile("static", hip_deg=0.0, knee_deg=0.0, ankle_deg=0.0,
                            yaw_range_deg=0.0, root_walk_deg=0.0, trans_sway_m=0.0),
}


def get_profile(profile) -> MotionProfile:
    if isinstance(profile, MotionProfile):
        return profile
    try:
        return PROFILES[profile]
    except KeyError:
        raise ValueError(f"unknown motion profile {profile!r}; choose from {sorted(PROFILES)}") from None


def _joint_limit(profile: MotionProfile, name: str) -> float:
    if name.endswith("hip"):
        return profile.hip_deg
    if name.endswith("knee"):
        return profile.knee_deg
    if name.endswith("ankle"):
        return profile.ankle_deg
    return 0.0


def _random_axes(rng, n):
    axes = rng.standard_normal((n, 3))
    return axes / np.linalg.norm(axes, axis=-1, keepdims=True)


def _sinusoid_rotvec(rng, limit_deg, t, profile: MotionProfile) -> np.ndarray:
    """Static offset (up to half the limit) plus oscillations sharing the other half."""
    if limit_deg == 0:
        return np.zeros((len(t), 3))
    limit = np.radians(limit_deg)
    offset = _random_axes(rng, 1)[0] * rng.uniform(0.0, limit / 2)
    k = profile.components
    axes = _random_axes(rng, k)
    amps = rng.uniform(0.0, limit / (2 * k), size=k)
    freqs = rng.uniform(*profile.freq_hz, size=k)
    phases = rng.uniform(0.0, 2 * np.pi, size=k)
    waves = amps * np.sin(2 * np.pi * freqs * t[:, None] + phases)  # (L, k)
    return offset + waves @ axes


def generate_sequence(profile, L: int, fps: float, rng: np.random.Generator,
                      skeleton: Skeleton | None = None) -> MotionSequence:
    if L < 2:
        raise ValueError("sequence length must be at least 2")
    profile = get_profile(profile)
    skeleton = skeleton or Skeleton()
    t = np.arange(L) / fps
    rel = np.broadcast_to(np.eye(3), (L, skeleton.num_joints, 3, 3)).copy()
    for j, name in enumerate(skeleton.names[1:], start=1):
        limit = _joint_limit(profile, name)
        if limit:
            rel[:, j] = rotmath.axis_angle_to_rotmat(_sinusoid_rotvec(rng, limit, t, profile))

    yaw = rng.uniform(-profile.yaw_range_deg, profile.yaw_range_deg)
    root = FACING_CAMERA @ rotmath.rot_z(yaw)
    if profile.root_walk_deg:
        # smoothed angular-velocity random walk, integrated on SO(3)
        step = np.radians(profile.root_walk_deg) / np.sqrt(fps)
        omega = np.zeros(3)
        walk = [np.eye(3)]
        for _ in range(L - 1):
            omega = 0.9 * omega + rng.normal(0.0, step, size=3)
            walk.append(walk[-1] @ rotmath.axis_angle_to_rotmat(omega * 0.1))
        rel[:, 0] = root @ np.stack(walk)
    else:
        rel[:, 0] = root

    base = np.array([rng.uniform(-0.5, 0.5), rng.uniform(-0.2, 0.2), rng.uniform(*profile.depth_m)])
    sway = np.zeros((L, 3))
    if profile.trans_sway_m:
        amp = rng.uniform(0.0, profile.trans_sway_m, size=3)
        freq = rng.uniform(*profile.freq_hz, size=3)
        phase = rng.uniform(0.0, 2 * np.pi, size=3)
        sway = amp * np.sin(2 * np.pi * freq * t[:, None] + phase)
    return MotionSequence(fps, rotmath.rotmat_to_rot6d(rel), base + sway)


@dataclass(frozen=True)
class ObservationSequence:
    """Pixel foot keypoints ``(L, 8, 3)`` as [u, v, confidence] and square boxes ``(L, 3)``."""

    fps: float
    camera: CameraIntrinsics
    keypoints: np.ndarray
    bbox: np.ndarray

    def __len__(self) -> int:
        return self.keypoints.shape[0]

    def visibility(self) -> np.ndarray:
        return self.keypoints[..., 2] > 0

    def foot2d_features(self) -> np.ndarray:
        """(L, 16) box-normalized coordinates, exactly zero where not visible."""
        uv = camera.normalize_keypoints(self.keypoints[..., :2], self.bbox)
        uv = np.where(self.visibility()[..., None], uv, 0.0)
        return uv.reshape(len(self), -1)

    def bbox_features(self) -> np.ndarray:
        return camera.bbox_features(self.bbox, self.camera)


def project_sequence(seq: MotionSequence, skeleton: Skeleton, cam: CameraIntrinsics):
    """Clean pixel projections of the 9 joints and the 8 foot markers per frame."""
    pose = kinematics.sequence_fk(skeleton, seq)
    markers = kinematics.foot_keypoints_3d(pose, skeleton)
    return camera.project(pose.joint_pos, cam), camera.project(markers, cam)


def bboxes_for(joints2d: np.ndarray, markers2d: np.ndarray, pad: float = BBOX_PAD) -> np.ndarray:
    """Per-frame square boxes, vectorized equivalent of ``camera.bbox_from_points``."""
    pts = np.concatenate([joints2d, markers2d], axis=1)
    lo, hi = pts.min(axis=1), pts.max(axis=1)
    extent = np.maximum(np.max(hi - lo, axis=-1), camera.MIN_BOX_SIZE)
    return np.concatenate([(lo + hi) / 2.0, (extent * (1.0 + pad))[:, None]], axis=-1)


def synthesize_observations(seq: MotionSequence, skeleton: Skeleton, cam: CameraIntrinsics,
                            noise: NoiseConfig, rng: np.random.Generator) -> ObservationSequence:
    joints2d, markers2d = project_sequence(seq, skeleton, cam)
    bbox = bboxes_for(joints2d, markers2d)
    noisy = markers2d + rng.normal(0.0, 1.0, size=markers2d.shape) * noise.kp_sigma_px
    visible = rng.random(markers2d.shape[:-1]) >= noise.drop_prob
    kps = np.concatenate([noisy, visible[..., None].astype(np.float64)], axis=-1)
    return ObservationSequence(seq.fps, cam, kps, bbox)


def simulate_initial_estimate(seq: MotionSequence, skeleton: Skeleton, noise: NoiseConfig,
                              rng: np.random.Generator) -> np.ndarray:
    """(L, 4, 6) global 6D rotations of l/r knee and l/r ankle with estimator-like error."""
    glob = kinematics.relative_to_global(skeleton, seq.rotmats())
    idx = [skeleton.index(n) for n in ESTIMATE_JOINTS]
    gt = glob[:, idx]
    sigma = noise.init_rot_sigma_deg
    bias = rotmath.axis_angle_to_rotmat(rotmath.random_rotvec(rng, sigma, (1, len(idx))))
    jitter = rotmath.axis_angle_to_rotmat(rotmath.random_rotvec(rng, sigma / 4, gt.shape[:2]))
    return rotmath.rotmat_to_rot6d(gt @ bias @ jitter)


def estimate_to_sequence(gt: MotionSequence, skeleton: Skeleton, estimate: np.ndarray) -> MotionSequence:
    """Embed estimated global knee/ankle rotations into a full relative-rotation sequence.

    Joints other than knees and ankles are copied from ``gt``.
    """
    rel = gt.rotmats()
    glob = kinematics.relative_to_global(skeleton, rel)
    est = rotmath.rot6d_to_rotmat(estimate)
    rot6d = gt.rot6d.copy()
    for k, name in enumerate(ESTIMATE_JOINTS):
        j = skeleton.index(name)
        parent = skeleton.names[skeleton.parents[j]]
        parent_glob = est[:, ESTIMATE_JOINTS.index(parent)] if parent in ESTIMATE_JOINTS \
            else glob[:, skeleton.parents[j]]
        rot6d[:, j] = rotmath.rotmat_to_rot6d(kinematics.global_to_relative(est[:, k], parent_glob))
    return MotionSequence(gt.fps, rot6d, gt.trans)


@dataclass
class TrainingExample:
    """One synthesized sequence with network inputs and supervision.

    ``cond_global`` holds ground-truth global 6D rotations of pelvis, hips and
    knees (order ``COND_JOINTS``); ``init_global_ankle`` holds the simulated
    estimator's ankles.  Targets follow from ``gt_sequence``.
    """

    foot2d: np.ndarray  # (L, 16)
    bbox_feat: np.ndarray  # (L, 3)
    cond_global: np.ndarray  # (L, 5, 6)
    init_global_ankle: np.ndarray  # (L, 2, 6)
    target_rel_ankle: np.ndarray  # (L, 2, 6)
    target_global_ankle: np.ndarray  # (L, 2, 6)
    gt_sequence: MotionSequence
    observation: ObservationSequence
    camera: CameraIntrinsics
    gt_joints2d: np.ndarray = field(repr=False, default=None)  # (L, 9, 2) pixels
    gt_markers2d: np.ndarray = field(repr=False, default=None)  # (L, 8, 2) pixels
    init_estimate: np.ndarray = field(repr=False, default=None)  # (L, 4, 6) estimated knees and ankles
    skeleton: Skeleton = field(repr=False, default=None)

    def __len__(self) -> int:
        return self.foot2d.shape[0]

    @property
    def input(self):
        from footlift.footmr import build_input

        return build_input(self.foot2d, self.bbox_feat, self.cond_global, self.init_global_ankle)


def make_training_example(seq: MotionSequence, skeleton: Skeleton, cam: CameraIntrinsics,
                          noise: NoiseConfig, augment: bool, rng: np.random.Generator,
                          estimated_knees: bool = False) -> TrainingExample:
    """Synthesize inputs and targets for ``seq``.

    Training conditions on ground-truth knees; ``estimated_knees`` swaps in
    the simulated estimator's knees, as at inference time.
    """
    # separate streams: the noise draws do not depend on whether we augment
    aug_rng, noise_rng = rng.spawn(2)
    if augment:
        seq = kinematics.apply_root_augmentation(seq, rotmath.sample_uniform_rotation(aug_rng))
    obs = synthesize_observations(seq, skeleton, cam, noise, noise_rng)
    init = simulate_initial_estimate(seq, skeleton, noise, noise_rng)
    rel = seq.rotmats()
    glob = kinematics.relative_to_global(skeleton, rel)
    la, ra = skeleton.ankles()
    target_global = glob[:, [la, ra]]
    # stored relatives are untouched by root augmentation, so these match bitwise
    target_rel = rel[:, [la, ra]]
    cond = rotmath.rotmat_to_rot6d(glob[:, [skeleton.index(n) for n in COND_JOINTS]])
    if estimated_knees:
        cond[:, 3:5] = init[:, 0:2]
    joints2d, markers2d = project_sequence(seq, skeleton, cam)
    return TrainingExample(
        foot2d=obs.foot2d_features(),
        bbox_feat=obs.bbox_features(),
        cond_global=cond,
        init_global_ankle=init[:, 2:4],
        target_rel_ankle=rotmath.rotmat_to_rot6d(target_rel),
        target_global_ankle=rotmath.rotmat_to_rot6d(target_global),
        gt_sequence=seq,
        observation=obs,
        camera=cam,
        gt_joints2d=joints2d,
        gt_markers2d=markers2d,
        init_estimate=init,
        skeleton=skeleton,
    )


def example_rng(seed: int, index: int, epoch: int | None = None) -> np.random.Generator:
    """Independent stream per (seed, sequence index[, epoch]) so generation order is irrelevant."""
    key = [seed, index] if epoch is None else [seed, index, epoch]
    return np.random.default_rng(key)
