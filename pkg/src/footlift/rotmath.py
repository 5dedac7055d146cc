"""Rotation utilities on SO(3).

Every function accepts either numpy arrays or torch tensors with arbitrary
leading batch dimensions: rotation matrices are ``(..., 3, 3)`` and 6D
rotations are ``(..., 6)``.  The 6D layout stacks the first column of the
matrix followed by the second column.
"""
from __future__ import annotations

import numpy as np
import torch

from footlift.errors import DegenerateInput

NORM_EPS = 1e-12


def _is_torch(x) -> bool:
    return isinstance(x, torch.Tensor)


def _norm(x):
    if _is_torch(x):
        return torch.linalg.norm(x, dim=-1, keepdim=True)
    return np.linalg.norm(x, axis=-1, keepdims=True)


def _dot(a, b):
    if _is_torch(a):
        return (a * b).sum(-1, keepdim=True)
    return (a * b).sum(-1, keepdims=True)


def _cross(a, b):
    if _is_torch(a):
        return torch.linalg.cross(a, b, dim=-1)
    return np.cross(a, b)


def _stack(xs, axis):
    if _is_torch(xs[0]):
        return torch.stack(xs, dim=axis)
    return np.stack(xs, axis=axis)


def _cat(xs):
    if _is_torch(xs[0]):
        return torch.cat(xs, dim=-1)
    return np.concatenate(xs, axis=-1)


def _min_value(x) -> float:
    if _is_torch(x):
        return float(x.detach().min()) if x.numel() else np.inf
    return float(x.min()) if x.size else np.inf


def rot6d_to_rotmat(r):
    """Gram-Schmidt map from 6D vectors to rotation matrices.

    Raises DegenerateInput when the first 3-vector vanishes or the second is
    parallel to it.
    """
    a1, a2 = r[..., 0:3], r[..., 3:6]
    n1 = _norm(a1)
    if _min_value(n1) <= NORM_EPS:
        raise DegenerateInput("first 6D column has (near) zero norm")
    c1 = a1 / n1
    u2 = a2 - _dot(c1, a2) * c1
    n2 = _norm(u2)
    if _min_value(n2) <= NORM_EPS:
        raise DegenerateInput("6D columns are collinear")
    c2 = u2 / n2
    c3 = _cross(c1, c2)
    return _stack([c1, c2, c3], axis=-1)


def rotmat_to_rot6d(R):
    return _cat([R[..., :, 0], R[..., :, 1]])


def compose(a, b):
    return a @ b


def inverse(R):
    return R.mT


def geodesic_angle_deg(a, b):
    """Angle in degrees of the relative rotation a^T b, in [0, 180].

    Uses atan2 of the antisymmetric and trace parts, which agrees with
    ``arccos((trace - 1) / 2)`` but keeps precision near 0 and 180 degrees.
    """
    rel = a.mT @ b
    cos = (rel[..., 0, 0] + rel[..., 1, 1] + rel[..., 2, 2] - 1.0) / 2.0
    vx = rel[..., 2, 1] - rel[..., 1, 2]
    vy = rel[..., 0, 2] - rel[..., 2, 0]
    vz = rel[..., 1, 0] - rel[..., 0, 1]
    if _is_torch(rel):
        sin = torch.sqrt(vx * vx + vy * vy + vz * vz) / 2.0
        return torch.rad2deg(torch.atan2(sin, cos))
    sin = np.sqrt(vx * vx + vy * vy + vz * vz) / 2.0
    return np.degrees(np.arctan2(sin, cos))


def axis_angle_to_rotmat(rotvec):
    """Rodrigues formula for numpy rotation vectors of shape (..., 3)."""
    rotvec = np.asarray(rotvec, dtype=np.float64)
    theta = np.linalg.norm(rotvec, axis=-1)[..., None, None]
    k = np.zeros_like(rotvec)
    nz = theta[..., 0, 0] > 0
    k[nz] = rotvec[nz] / theta[nz][..., 0]
    K = np.zeros(rotvec.shape[:-1] + (3, 3))
    K[..., 0, 1], K[..., 0, 2] = -k[..., 2], k[..., 1]
    K[..., 1, 0], K[..., 1, 2] = k[..., 2], -k[..., 0]
    K[..., 2, 0], K[..., 2, 1] = -k[..., 1], k[..., 0]
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def rot_x(deg):
    return axis_angle_to_rotmat(np.array([np.radians(deg), 0.0, 0.0]))


def rot_y(deg):
    return axis_angle_to_rotmat(np.array([0.0, np.radians(deg), 0.0]))


def rot_z(deg):
    return axis_angle_to_rotmat(np.array([0.0, 0.0, np.radians(deg)]))


def quat_to_rotmat(q):
    """Unit quaternions (w, x, y, z) to rotation matrices."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
    ], -2)


def sample_uniform_rotation(rng: np.random.Generator, size=None) -> np.ndarray:
    """Haar-uniform rotation(s) from normalized Gaussian quaternions."""
    shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
    q = rng.standard_normal(shape + (4,))
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return quat_to_rotmat(q)


def random_rotvec(rng: np.random.Generator, sigma_deg: float, shape=()) -> np.ndarray:
    """Rotation vectors with isotropic axis and half-normal angle (radians)."""
    axis = rng.standard_normal(tuple(shape) + (3,))
    axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = np.abs(rng.normal(0.0, np.radians(sigma_deg), size=tuple(shape)))
    return axis * angle[..., None]


def perturb_rotation(R: np.ndarray, sigma_deg: float, rng: np.random.Generator) -> np.ndarray:
    """Right-multiply each rotation by a random rotation of half-normal angle."""
    if sigma_deg < 0:
        raise ValueError("sigma_deg must be non-negative")
    R = np.asarray(R, dtype=np.float64)
    if sigma_deg == 0:
        return R.copy()
    return R @ axis_angle_to_rotmat(random_rotvec(rng, sigma_deg, R.shape[:-2]))


def is_rotation(R, tol: float = 1e-9) -> bool:
    R = np.asarray(R.detach() if _is_torch(R) else R, dtype=np.float64)
    eye = np.eye(3)
    if not np.all(np.isfinite(R)):
        return False
    if np.max(np.abs(R.mT @ R - eye)) > tol:
        return False
    return bool(np.max(np.abs(np.linalg.det(R) - 1.0)) <= tol)
