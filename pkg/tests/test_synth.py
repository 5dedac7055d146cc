import math

import numpy as np
import pytest
from scipy import stats

from footlift import camera, kinematics, rotmath, synth
from footlift.synth import NoiseConfig

CAM = camera.CameraIntrinsics()
QUIET = NoiseConfig(kp_sigma_px=0.0, drop_prob=0.0, init_rot_sigma_deg=0.0)


def gen(i, profile="everyday", L=40, seed=0):
    return synth.generate_sequence(profile, L, 30.0, synth.example_rng(seed, i))


def test_noise_config_validation():
    for bad in ({"drop_prob": 1.5}, {"kp_sigma_px": -1.0}, {"init_rot_sigma_deg": -2.0}):
        with pytest.raises(ValueError):
            NoiseConfig(**bad)


def test_static_profile_is_rest_pose(skeleton):
    seq = gen(0, "static", L=20)
    rel = seq.rotmats()
    assert np.allclose(rel[:, 1:], np.eye(3), atol=0)
    assert np.array_equal(rel[0], rel[-1]) and np.ptp(seq.trans, axis=0).max() == 0


def test_generation_is_deterministic():
    a, b = gen(3), gen(3)
    assert np.array_equal(a.rot6d, b.rot6d) and np.array_equal(a.trans, b.trans)
    assert not np.array_equal(a.rot6d, gen(4).rot6d)


def test_generated_sequences_are_valid(skeleton):
    for i in range(200):
        seq = gen(i, "complex-foot" if i % 2 else "everyday", L=10)
        assert rotmath.is_rotation(seq.rotmats(), 1e-9)
        pts = kinematics.sequence_fk(skeleton, seq).joint_pos
        assert pts[..., 2].min() > 0.5
        j2d, m2d = synth.project_sequence(seq, skeleton, CAM)
        assert np.all(np.isfinite(j2d)) and np.all(np.isfinite(m2d))


def test_profile_ankle_amplitudes(skeleton):
    def max_ankle(profile):
        out = []
        for i in range(100):
            rel = gen(i, profile, L=60).rotmats()[:, list(skeleton.ankles())]
            out.append(rotmath.geodesic_angle_deg(np.eye(3), rel).max())
        return np.array(out)

    every, complex_ = max_ankle("everyday"), max_ankle("complex-foot")
    assert every.max() <= 15.0 + 1e-9
    assert complex_.max() <= 70.0 + 1e-9
    assert np.median(complex_) > 2 * np.median(every)


def test_trajectories_are_smooth(skeleton):
    seq = gen(0, "complex-foot", L=120)
    rel = seq.rotmats()
    steps = rotmath.geodesic_angle_deg(rel[1:], rel[:-1])
    assert steps.max() < 10.0


def test_quiet_observations_are_exact_projections(skeleton, rng):
    seq = gen(1)
    obs = synth.synthesize_observations(seq, skeleton, CAM, QUIET, rng)
    _, markers = synth.project_sequence(seq, skeleton, CAM)
    assert np.array_equal(obs.keypoints[..., :2], markers)
    assert np.all(obs.keypoints[..., 2] == 1.0)


def test_dropping_zeroes_inputs(skeleton, rng):
    seq = gen(2)
    obs = synth.synthesize_observations(seq, skeleton, CAM, NoiseConfig(drop_prob=1.0), rng)
    assert np.all(obs.keypoints[..., 2] == 0)
    assert np.all(obs.foot2d_features() == 0.0)


def test_dropout_rate(skeleton, rng):
    seq = gen(3, L=1250)  # 10k keypoints
    obs = synth.synthesize_observations(seq, skeleton, CAM, NoiseConfig(drop_prob=0.3), rng)
    assert abs((1 - obs.visibility().mean()) - 0.3) < 0.02


def test_bbox_covers_joints_and_markers(skeleton, rng):
    seq = gen(4)
    obs = synth.synthesize_observations(seq, skeleton, CAM, QUIET, rng)
    j2d, m2d = synth.project_sequence(seq, skeleton, CAM)
    for t in (0, 17, 39):
        box = camera.bbox_from_points(np.concatenate([j2d[t], m2d[t]]), synth.BBOX_PAD)
        assert np.allclose(obs.bbox[t], np.asarray(box), atol=1e-9)


def test_initial_estimate_zero_sigma_is_exact(skeleton, rng):
    seq = gen(5)
    est = synth.simulate_initial_estimate(seq, skeleton, QUIET, rng)
    glob = kinematics.relative_to_global(skeleton, seq.rotmats())
    idx = [skeleton.index(n) for n in synth.ESTIMATE_JOINTS]
    assert np.allclose(est, rotmath.rotmat_to_rot6d(glob[:, idx]), atol=1e-12)


def test_initial_estimate_half_normal_mean(skeleton):
    noise = NoiseConfig()
    means = []
    for i in range(1000):
        seq = gen(i, L=8)
        est = synth.simulate_initial_estimate(seq, skeleton, noise, np.random.default_rng([7, i]))
        R = rotmath.rot6d_to_rotmat(est)
        assert i > 20 or rotmath.is_rotation(R, 1e-9)
        glob = kinematics.relative_to_global(skeleton, seq.rotmats())[:, list(skeleton.ankles())]
        means.append(rotmath.geodesic_angle_deg(R[:, 2:], glob).mean())
    expected = noise.init_rot_sigma_deg * math.sqrt(2 / math.pi)
    assert abs(np.mean(means) - expected) < 0.10 * expected


def test_initial_estimate_is_temporally_correlated(skeleton, rng):
    seq = gen(6, L=60)
    est = rotmath.rot6d_to_rotmat(synth.simulate_initial_estimate(seq, skeleton, NoiseConfig(), rng))
    glob = kinematics.relative_to_global(skeleton, seq.rotmats())[:, list(skeleton.ankles())]
    err = np.swapaxes(glob, -1, -2) @ est[:, 2:]  # per-frame error rotation
    # the per-sequence bias dominates: consecutive errors stay close
    drift = rotmath.geodesic_angle_deg(err[1:], err[:-1]).mean()
    assert drift < 0.5 * rotmath.geodesic_angle_deg(np.eye(3), err).mean() + 10


def test_training_example_targets(skeleton):
    seq = gen(7)
    rng_a, rng_b = synth.example_rng(0, 7, 0), synth.example_rng(0, 7, 0)
    plain = synth.make_training_example(seq, skeleton, CAM, QUIET, False, rng_a)
    assert np.allclose(plain.init_global_ankle, plain.target_global_ankle, atol=1e-12)
    aug = synth.make_training_example(seq, skeleton, CAM, QUIET, True, rng_b)
    assert np.array_equal(aug.target_rel_ankle, plain.target_rel_ankle)
    # global targets differ by exactly the sampled root rotation
    R = rotmath.rot6d_to_rotmat(aug.gt_sequence.rot6d[0, 0]) @ rotmath.rot6d_to_rotmat(seq.rot6d[0, 0]).T
    g_aug = rotmath.rot6d_to_rotmat(aug.target_global_ankle)
    g_plain = rotmath.rot6d_to_rotmat(plain.target_global_ankle)
    assert np.abs(g_aug - R @ g_plain).max() < 1e-9
    # targets agree with the ground-truth sequence through relative/global conversion
    glob = kinematics.relative_to_global(skeleton, aug.gt_sequence.rotmats())
    assert np.abs(rotmath.rotmat_to_rot6d(glob[:, list(skeleton.ankles())]) - aug.target_global_ankle).max() < 1e-9
    assert len({len(aug), aug.bbox_feat.shape[0], aug.cond_global.shape[0], aug.init_global_ankle.shape[0]}) == 1


def test_quiet_examples_are_solvable(skeleton):
    ex = synth.make_training_example(gen(8), skeleton, CAM, QUIET, True, synth.example_rng(0, 8, 0))
    rel = ex.gt_sequence.rotmats()
    glob_knee = rotmath.rot6d_to_rotmat(ex.cond_global[:, 3:5])
    rel[:, list(skeleton.ankles())] = glob_knee.swapaxes(-1, -2) @ rotmath.rot6d_to_rotmat(ex.target_global_ankle)
    pose = kinematics.forward_kinematics(skeleton, rel, ex.gt_sequence.trans)
    reproj = camera.project(kinematics.foot_keypoints_3d(pose, skeleton), CAM)
    assert np.abs(reproj - ex.observation.keypoints[..., :2]).max() < 1e-6


def test_examples_are_deterministic(skeleton):
    a = synth.make_training_example(gen(9), skeleton, CAM, NoiseConfig(), True, synth.example_rng(1, 9, 2))
    b = synth.make_training_example(gen(9), skeleton, CAM, NoiseConfig(), True, synth.example_rng(1, 9, 2))
    for name in ("foot2d", "bbox_feat", "cond_global", "init_global_ankle", "target_global_ankle"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_augmentation_covers_so3(skeleton):
    angles = []
    for i in range(1500):
        ex = synth.make_training_example(gen(i, L=2), skeleton, CAM, QUIET, True, synth.example_rng(0, i, 0))
        angles.append(rotmath.geodesic_angle_deg(np.eye(3), rotmath.rot6d_to_rotmat(ex.target_global_ankle[0, 0])))
    haar = rotmath.geodesic_angle_deg(np.eye(3), rotmath.sample_uniform_rotation(np.random.default_rng(0), 5000))
    # documented threshold: two-sample KS p-value above 1e-3
    assert stats.ks_2samp(angles, haar).pvalue > 1e-3


def test_estimate_to_sequence_roundtrip(skeleton, rng):
    seq = gen(10)
    est = synth.simulate_initial_estimate(seq, skeleton, NoiseConfig(), rng)
    full = synth.estimate_to_sequence(seq, skeleton, est)
    glob = kinematics.relative_to_global(skeleton, full.rotmats())
    idx = [skeleton.index(n) for n in synth.ESTIMATE_JOINTS]
    assert np.abs(rotmath.rotmat_to_rot6d(glob[:, idx]) - est).max() < 1e-9
    assert np.array_equal(full.rot6d[:, :3], seq.rot6d[:, :3])
