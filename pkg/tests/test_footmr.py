import numpy as np
import pytest
import torch

from footlift import camera, footmr, rotmath, synth
from footlift.config import ModelConfig, OUTPUT_MODES
from footlift.errors import ShapeMismatch

TINY = ModelConfig(d_h=16, layers=2, heads=2, window=4)


def random_input(rng, L=10, lead=(), joints=("knee", "ankle")):
    cond = rotmath.rotmat_to_rot6d(rotmath.sample_uniform_rotation(rng, lead + (L, 5)))
    init = rotmath.rotmat_to_rot6d(rotmath.sample_uniform_rotation(rng, lead + (L, 2)))
    inp = footmr.build_input(rng.standard_normal(lead + (L, 16)), rng.standard_normal(lead + (L, 3)),
                             cond, init, joints)
    return inp, cond, init


def test_input_layout(rng):
    inp, cond, init = random_input(rng)
    assert inp.f_rot.shape == (10, 24)  # knees and ankles, 6D each
    assert np.array_equal(inp.f_rot[:, :12], cond[:, 3:5].reshape(10, 12))
    assert np.array_equal(inp.f_rot[:, 12:], init.reshape(10, 12))
    full, _, _ = random_input(rng, joints=("pelvis", "hip", "knee", "ankle"))
    assert full.f_rot.shape == (10, 42)
    assert footmr.rot_feature_width(()) == 0
    none, _, _ = random_input(rng, joints=())
    assert none.f_rot.shape == (10, 0)


def test_input_validation(rng):
    with pytest.raises(ShapeMismatch):
        footmr.RefineInput(np.zeros((5, 16)), np.zeros((4, 3)), np.zeros((5, 24)))
    with pytest.raises(ShapeMismatch):
        footmr.RefineInput(np.zeros((5, 15)), np.zeros((5, 3)), np.zeros((5, 24)))


@pytest.mark.parametrize("mode", OUTPUT_MODES)
def test_untrained_model_is_identity_refinement(rng, mode):
    config = ModelConfig(d_h=16, layers=2, heads=2, window=4, output_mode=mode)
    params = footmr.init_params(config, seed=1)
    inp, cond, init = random_input(rng)
    delta = footmr.forward(inp, config, params).detach().numpy()
    knee = rotmath.rot6d_to_rotmat(cond[:, 3:5])
    glob, rel = footmr.apply_output(delta, init, knee, mode)
    assert np.allclose(rel, knee.swapaxes(-1, -2) @ glob, atol=1e-12)
    if mode.startswith("residual"):
        assert np.allclose(glob, rotmath.rot6d_to_rotmat(init), atol=1e-12)
    elif mode == "global":
        assert np.allclose(glob, np.eye(3), atol=1e-12)
    else:
        assert np.allclose(rel, np.eye(3), atol=1e-12)


def test_residual_modes_differ_only_in_frame(rng):
    inp, cond, init = random_input(rng)
    knee = rotmath.rot6d_to_rotmat(cond[:, 3:5])
    delta = 0.1 * rng.standard_normal((10, 2, 6))
    g_glob, _ = footmr.apply_output(delta, init, knee, "residual_global")
    assert np.allclose(g_glob, rotmath.rot6d_to_rotmat(init + delta))
    _, r_rel = footmr.apply_output(delta, init, knee, "residual_relative")
    init_rel = rotmath.rotmat_to_rot6d(knee.swapaxes(-1, -2) @ rotmath.rot6d_to_rotmat(init))
    assert np.allclose(r_rel, rotmath.rot6d_to_rotmat(init_rel + delta))
    with pytest.raises(ValueError):
        footmr.apply_output(delta, init, knee, "sideways")


def test_forward_shapes_and_batch_independence(rng):
    params = footmr.init_params(TINY, seed=0, zero_head=False)
    inp, _, _ = random_input(rng, L=12, lead=(3,))
    out = footmr.forward(inp, TINY, params)
    assert out.shape == (3, 12, 2, 6)
    single = footmr.RefineInput(inp.f_foot2d[1], inp.f_bbox[1], inp.f_rot[1])
    assert torch.allclose(footmr.forward(single, TINY, params), out[1], atol=1e-12)


def test_rotation_stream_required_when_features_given(rng):
    config = ModelConfig(d_h=16, layers=1, heads=2, window=4, input_joints=())
    params = footmr.init_params(config)
    inp, _, _ = random_input(rng)
    with pytest.raises(ShapeMismatch):
        footmr.forward(inp, config, params)


def test_model_receptive_field(rng):
    config = ModelConfig(d_h=16, layers=2, heads=2, window=5)
    params = footmr.init_params(config, seed=0, zero_head=False)
    for p in params.values():
        p.requires_grad_(False)
    inp, _, _ = random_input(rng, L=300)
    foot = torch.as_tensor(inp.f_foot2d).clone().requires_grad_(True)
    out = footmr.forward(footmr.RefineInput(foot, torch.as_tensor(inp.f_bbox), torch.as_tensor(inp.f_rot)),
                         config, params)
    grad = torch.autograd.grad(out[150].sum(), foot)[0]
    reach = torch.nonzero(grad.abs().amax(-1) > 0).flatten()
    assert reach.min() == 150 - 10 and reach.max() == 150 + 10


def test_total_window_semantics():
    assert ModelConfig(window=120).half_window == 120
    assert ModelConfig(window=120, window_semantics="total").half_window == 60


def test_refine_sequence(rng, skeleton):
    seq = synth.generate_sequence("everyday", 16, 30.0, rng)
    obs = synth.synthesize_observations(seq, skeleton, camera.CameraIntrinsics(), synth.NoiseConfig(), rng)
    init = synth.simulate_initial_estimate(seq, skeleton, synth.NoiseConfig(), rng)
    params = footmr.init_params(TINY)
    out = footmr.refine_sequence(obs, init, TINY, params)
    assert np.allclose(out.global_ankle, rotmath.rot6d_to_rotmat(init[:, 2:]), atol=1e-12)
    with pytest.raises(ShapeMismatch):
        footmr.refine_sequence(obs, init[:5], TINY, params)
    hip_model = ModelConfig(d_h=16, layers=1, heads=2, window=4, input_joints=("hip", "knee", "ankle"))
    with pytest.raises(ShapeMismatch):
        footmr.refine_sequence(obs, init, hip_model, footmr.init_params(hip_model))
