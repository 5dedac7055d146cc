import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from footlift import camera
from footlift.camera import BBox, CameraIntrinsics
from footlift.errors import BehindCamera, EmptyInput

CAM = CameraIntrinsics()


def test_project_examples():
    assert np.array_equal(camera.project(np.array([0, 0, 2.0]), CAM), [960, 540])
    assert np.array_equal(camera.project(np.array([0.5, 0, 2.0]), CAM), [1210, 540])
    near = camera.project(np.array([0.3, -0.2, 2.0]), CAM) - [960, 540]
    far = camera.project(np.array([0.3, -0.2, 4.0]), CAM) - [960, 540]
    assert np.allclose(far, near / 2)


@pytest.mark.parametrize("z", [0.0, -1.0, 1e-7])
def test_project_behind_camera(z):
    with pytest.raises(BehindCamera):
        camera.project(np.array([[0, 0, 2.0], [0, 0, z]]), CAM)


def test_project_torch_grad():
    p = torch.tensor([[0.1, 0.2, 3.0]], dtype=torch.float64, requires_grad=True)
    camera.project(p, CAM).sum().backward()
    assert p.grad is not None and torch.isfinite(p.grad).all()


@given(st.floats(0.1, 1.0), st.floats(0.1, 1.0), st.floats(1.0, 5.0), st.floats(1.01, 10.0))
def test_off_axis_points_approach_principal_point(x, y, z, lam):
    p = np.array([x, y, z])
    a = np.linalg.norm(camera.project(p, CAM) - [CAM.cx, CAM.cy])
    b = np.linalg.norm(camera.project(lam * p, CAM) - [CAM.cx, CAM.cy])
    assert np.isclose(a, b)  # scaling along the ray keeps the image point
    shifted = np.linalg.norm(camera.project(p + [0, 0, lam], CAM) - [CAM.cx, CAM.cy])
    assert shifted < a


def test_bbox_examples():
    box = camera.bbox_from_points(np.array([[3.0, 4.0]]))
    assert box.center == (3.0, 4.0) and box.size == pytest.approx(1.2)
    box = camera.bbox_from_points(np.array([[0, 0], [10, 0.0]]), pad_fraction=0.0)
    assert box.center == (5.0, 0.0) and box.size == 10.0
    assert camera.bbox_from_points(np.array([[0, 0], [10, 0.0]])).size == pytest.approx(12.0)
    with pytest.raises(EmptyInput):
        camera.bbox_from_points(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        BBox((0, 0), 0.0)


def test_normalize_examples(rng):
    box = BBox((100.0, 50.0), 20.0)
    assert np.array_equal(camera.normalize_keypoints(np.array([[100.0, 50.0]]), box), [[0, 0]])
    assert np.array_equal(camera.normalize_keypoints(np.array([[120.0, 50.0]]), box), [[1, 0]])
    kps = rng.uniform(0, 1000, (7, 8, 3))
    boxes = np.concatenate([rng.uniform(0, 1000, (7, 2)), rng.uniform(10, 500, (7, 1))], axis=1)
    n = camera.normalize_keypoints(kps, boxes)
    assert np.array_equal(n[..., 2], kps[..., 2])
    assert np.abs(camera.denormalize_keypoints(n, boxes) - kps).max() < 1e-12
    shift = np.array([37.5, -12.25])
    moved = kps.copy()
    moved[..., :2] += shift
    moved_boxes = boxes.copy()
    moved_boxes[:, :2] += shift
    assert np.abs(camera.normalize_keypoints(moved, moved_boxes) - n).max() < 1e-12


def test_bbox_features():
    assert np.allclose(camera.bbox_features(BBox((960.0, 540.0), 300.0), CAM), [0, 0, 0.3])
    assert camera.bbox_features(BBox((960.0, 540.0), 1000.0), CAM)[2] == 1.0
    a = camera.bbox_features(np.array([500.0, 400, 200]), CAM)
    b = camera.bbox_features(np.array([1500.0, 400, 200]), CAM)
    assert b[0] - a[0] == pytest.approx(1.0) and b[1] == a[1]


def test_camera_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(f=0.0)
