import numpy as np
import pytest
import torch

from footlift import kinematics, rotmath
from footlift.kinematics import MotionSequence, Skeleton


def naive_global(skeleton, rel, j):
    """Recursive product of ancestor rotations, one frame."""
    p = skeleton.parents[j]
    return rel[j] if p < 0 else naive_global(skeleton, rel, p) @ rel[j]


def naive_position(skeleton, rel, trans, j):
    p = skeleton.parents[j]
    if p < 0:
        return trans
    return naive_position(skeleton, rel, trans, p) + naive_global(skeleton, rel, p) @ skeleton.offsets[j]


def random_sequence(rng, L=5, J=9):
    rot6d = rotmath.rotmat_to_rot6d(rotmath.sample_uniform_rotation(rng, (L, J)))
    return MotionSequence(30.0, rot6d, rng.uniform(-1, 1, (L, 3)) + [0, 0, 3])


def test_default_skeleton_matches_documented_proportions(skeleton):
    assert skeleton.names == ("pelvis", "l_hip", "r_hip", "l_knee", "r_knee", "l_ankle", "r_ankle",
                              "l_foot", "r_foot")
    off = np.linalg.norm(skeleton.offsets, axis=1)
    assert off[1] + off[2] == pytest.approx(0.20)
    assert off[3] == pytest.approx(0.42) and off[5] == pytest.approx(0.43)
    assert off[7] == pytest.approx(0.20, abs=1e-3)
    assert np.array_equal(skeleton.foot_markers[0, 1], [0.15, 0.05, -0.04])
    assert np.array_equal(skeleton.foot_markers[1, 1], [0.15, -0.05, -0.04])


@pytest.mark.parametrize("kwargs", [
    {"parents": (-1, 0, 0, 1, 2, 3, 4, 5, 9)},
    {"parents": (0, 0, 0, 1, 2, 3, 4, 5, 6)},
    {"names": ("a",) * 9},
    {"offsets": np.full((9, 3), np.nan)},
    {"foot_markers": np.zeros((2, 3, 3))},
])
def test_skeleton_validation(kwargs):
    with pytest.raises(ValueError):
        Skeleton(**kwargs)


def test_motion_sequence_validation():
    with pytest.raises(ValueError):
        MotionSequence(0.0, np.zeros((2, 9, 6)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        MotionSequence(30.0, np.zeros((2, 9, 6)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        MotionSequence(30.0, np.zeros((0, 9, 6)), np.zeros((0, 3)))


def test_relative_to_global_examples(skeleton):
    rel = np.tile(np.eye(3), (9, 1, 1))
    rel[0] = rotmath.rot_z(90)
    glob = kinematics.relative_to_global(skeleton, rel)
    assert np.allclose(glob, rotmath.rot_z(90), atol=1e-15)
    rel = np.tile(np.eye(3), (9, 1, 1))
    rel[0] = rel[1] = rel[3] = rotmath.rot_x(30)
    glob = kinematics.relative_to_global(skeleton, rel)
    assert np.allclose(glob[3], rotmath.rot_x(90), atol=1e-14)
    assert np.allclose(glob[3], naive_global(skeleton, rel, 3), atol=0)
    root_only = Skeleton()
    R = rotmath.rot_y(33)
    assert np.array_equal(kinematics.relative_to_global(root_only, np.tile(R, (9, 1, 1)))[0], R)


def test_global_to_relative_examples(rng):
    R = rotmath.sample_uniform_rotation(rng)
    assert np.allclose(kinematics.global_to_relative(R, R), np.eye(3), atol=1e-14)
    assert np.allclose(kinematics.global_to_relative(rotmath.rot_z(90), np.eye(3)), rotmath.rot_z(90))


def test_inverse_property_1000_sequences(rng, skeleton):
    rel = rotmath.sample_uniform_rotation(rng, (1000, 4, 9))
    glob = kinematics.relative_to_global(skeleton, rel)
    parents = np.array(skeleton.parents[1:])
    back = kinematics.global_to_relative(glob[..., 1:, :, :], glob[..., parents, :, :])
    assert np.abs(back - rel[..., 1:, :, :]).max() < 1e-9
    assert np.array_equal(glob[..., 0, :, :], rel[..., 0, :, :])


def test_fk_equals_naive_recursive_oracle_exactly(rng, skeleton):
    seq = random_sequence(rng, L=20)
    pose = kinematics.sequence_fk(skeleton, seq)
    rel = seq.rotmats()
    for t in range(len(seq)):
        for j in range(skeleton.num_joints):
            assert np.array_equal(pose.global_rot[t, j], naive_global(skeleton, rel[t], j))
            assert np.array_equal(pose.joint_pos[t, j], naive_position(skeleton, rel[t], seq.trans[t], j))


def test_fk_identity_pose(skeleton):
    rel = np.tile(np.eye(3), (9, 1, 1))
    pose = kinematics.forward_kinematics(skeleton, rel, np.array([0, 0, 2.0]))
    expected = np.zeros((9, 3))
    for j, p in enumerate(skeleton.parents):
        expected[j] = (expected[p] if p >= 0 else np.array([0, 0, 2.0])) + (skeleton.offsets[j] if p >= 0 else 0)
    assert np.allclose(pose.joint_pos, expected, atol=1e-15)


def test_fk_hip_flexion_two_bone_oracle(skeleton):
    rel = np.tile(np.eye(3), (9, 1, 1))
    rel[1] = rotmath.rot_x(90)
    pose = kinematics.forward_kinematics(skeleton, rel, np.zeros(3))
    hip = pose.joint_pos[1]
    # Rx(90) maps (0, 0, -0.42) to (0, 0.42, 0)
    assert np.allclose(pose.joint_pos[3] - hip, [0, 0.42, 0], atol=1e-15)
    assert np.allclose(pose.joint_pos[5] - pose.joint_pos[3], [0, 0.43, 0], atol=1e-15)


def test_bone_lengths_conserved(rng, skeleton):
    seq = random_sequence(rng, L=200)
    pos = kinematics.sequence_fk(skeleton, seq).joint_pos
    for j, p in enumerate(skeleton.parents):
        if p >= 0:
            lengths = np.linalg.norm(pos[:, j] - pos[:, p], axis=-1)
            assert np.abs(lengths - np.linalg.norm(skeleton.offsets[j])).max() < 1e-9
    assert np.array_equal(pos[:, 0], seq.trans)


def test_fk_torch_matches_numpy(rng, skeleton):
    seq = random_sequence(rng)
    a = kinematics.sequence_fk(skeleton, seq)
    b = kinematics.forward_kinematics(skeleton, torch.as_tensor(seq.rotmats()), torch.as_tensor(seq.trans))
    assert np.allclose(a.joint_pos, b.joint_pos.numpy(), atol=1e-14)


def test_foot_markers(rng, skeleton):
    rel = np.tile(np.eye(3), (9, 1, 1))
    pose = kinematics.forward_kinematics(skeleton, rel, np.array([0, 0, 3.0]))
    m = kinematics.foot_keypoints_3d(pose, skeleton)
    assert m.shape == (8, 3)
    for side, ankle in enumerate(skeleton.ankles()):
        assert np.allclose(m[4 * side:4 * side + 4] - pose.joint_pos[ankle], skeleton.foot_markers[side])
    # ankle Rz(180) mirrors the planar markers through the ankle in x and y
    rel[5] = rotmath.rot_z(180)
    turned = kinematics.foot_keypoints_3d(kinematics.forward_kinematics(skeleton, rel, np.array([0, 0, 3.0])),
                                          skeleton)
    d = turned[:4] - pose.joint_pos[5]
    assert np.allclose(d, skeleton.foot_markers[0] * [-1, -1, 1], atol=1e-15)
    # rigid: marker-ankle distances do not depend on the ankle rotation
    rel[5] = rotmath.sample_uniform_rotation(rng)
    again = kinematics.foot_keypoints_3d(kinematics.forward_kinematics(skeleton, rel, np.zeros(3)), skeleton)
    ankle = kinematics.forward_kinematics(skeleton, rel, np.zeros(3)).joint_pos[5]
    assert np.allclose(np.linalg.norm(again[:4] - ankle, axis=-1), np.linalg.norm(skeleton.foot_markers[0], axis=-1))


def test_root_augmentation(rng, skeleton):
    seq = random_sequence(rng, L=30)
    same = kinematics.apply_root_augmentation(seq, np.eye(3))
    assert np.allclose(same.rot6d, seq.rot6d, atol=1e-15) and np.array_equal(same.trans, seq.trans)
    for _ in range(100):
        R = rotmath.sample_uniform_rotation(rng)
        aug = kinematics.apply_root_augmentation(seq, R)
        g0 = kinematics.sequence_fk(skeleton, seq)
        g1 = kinematics.sequence_fk(skeleton, aug)
        la, ra = skeleton.ankles()
        assert np.abs(g1.global_rot[:, [la, ra]] - R @ g0.global_rot[:, [la, ra]]).max() < 1e-9
        # relative ankles recovered from augmented globals equal the originals
        lk, rk = skeleton.knees()
        back = kinematics.global_to_relative(g1.global_rot[:, [la, ra]], g1.global_rot[:, [lk, rk]])
        assert np.abs(back - seq.rotmats()[:, [la, ra]]).max() < 1e-12
        # FK equivariance about the root position
        expected = (g0.joint_pos - seq.trans[:, None]) @ R.T + seq.trans[:, None]
        assert np.abs(g1.joint_pos - expected).max() < 1e-12
