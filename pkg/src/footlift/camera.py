"""Pinhole projection, person boxes and box-relative normalization.

Boxes are square and stored as ``[center_u, center_v, size]``; the
functions below accept a :class:`BBox` or any ``(..., 3)`` array laid out
the same way, so per-frame box tracks are plain ``(L, 3)`` arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from footlift.errors import BehindCamera, EmptyInput

MIN_DEPTH = 1e-6
MIN_BOX_SIZE = 1.0


@dataclass(frozen=True)
class CameraIntrinsics:
    f: float = 1000.0
    cx: float = 960.0
    cy: float = 540.0
    width: float = 1920.0
    height: float = 1080.0

    def __post_init__(self):
        if self.f <= 0 or self.width <= 0 or self.height <= 0:
            raise ValueError("focal length and image size must be positive")


@dataclass(frozen=True)
class BBox:
    center: tuple[float, float]
    size: float

    def __post_init__(self):
        if not self.size > 0:
            raise ValueError("box size must be positive")

    def __array__(self, dtype=None, copy=None):
        return np.array([self.center[0], self.center[1], self.size], dtype=dtype)


def project(points, cam: CameraIntrinsics):
    """Project camera-frame points (..., 3) in meters to pixels (..., 2)."""
    z = points[..., 2]
    zmin = float(z.detach().min() if isinstance(z, torch.Tensor) else z.min()) if (z.numel() if isinstance(z, torch.Tensor) else np.size(z)) else np.inf
    if zmin <= MIN_DEPTH:
        raise BehindCamera(f"point at depth {zmin:.3g} m is not in front of the camera")
    u = cam.f * points[..., 0] / z + cam.cx
    v = cam.f * points[..., 1] / z + cam.cy
    if isinstance(points, torch.Tensor):
        return torch.stack([u, v], dim=-1)
    return np.stack([u, v], axis=-1)


def bbox_from_points(points2d, pad_fraction: float = 0.2) -> BBox:
    pts = np.asarray(points2d, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise EmptyInput("bbox_from_points needs at least one point")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    extent = max(float(np.max(hi - lo)), MIN_BOX_SIZE)
    center = (lo + hi) / 2.0
    return BBox((float(center[0]), float(center[1])), extent * (1.0 + pad_fraction))


def normalize_keypoints(kps, bbox):
    """Map pixel keypoints (..., K, 2+) into box units; extra columns pass through.

    ``bbox`` broadcasts against the keypoint leading dims, e.g. (L, 3) for (L, K, 3).
    """
    box = bbox if isinstance(bbox, torch.Tensor) else np.asarray(bbox, dtype=np.float64)
    center = box[..., None, 0:2]
    size = box[..., None, 2:3]
    uv = (kps[..., 0:2] - center) / size
    if kps.shape[-1] == 2:
        return uv
    if isinstance(kps, torch.Tensor):
        return torch.cat([uv, kps[..., 2:]], dim=-1)
    return np.concatenate([uv, kps[..., 2:]], axis=-1)


def denormalize_keypoints(kps, bbox):
    box = np.asarray(bbox, dtype=np.float64)
    out = np.array(kps, dtype=np.float64, copy=True)
    out[..., 0:2] = out[..., 0:2] * box[..., None, 2:3] + box[..., None, 0:2]
    return out


def bbox_features(bbox, cam: CameraIntrinsics) -> np.ndarray:
    """Focal-normalized box center offset from the image center, and box scale."""
    box = np.asarray(bbox, dtype=np.float64)
    return np.stack([
        (box[..., 0] - cam.width / 2.0) / cam.f,
        (box[..., 1] - cam.height / 2.0) / cam.f,
        box[..., 2] / cam.f,
    ], axis=-1)
