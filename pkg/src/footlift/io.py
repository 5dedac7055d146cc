"""JSON file formats for motions, observations and skeletons.

All files carry ``format_version = 1``.  Rotations are stored per joint as
6D vectors: the first column of the rotation matrix followed by the second.

Motion file::

    {"format_version": 1, "fps": 30.0, "skeleton": <inline skeleton | path | null>,
     "frames": [{"rot6d": [[6 floats] x J], "trans": [x, y, z]}, ...]}

Observation file::

    {"format_version": 1, "fps": 30.0,
     "camera": {"f": .., "cx": .., "cy": .., "width": .., "height": ..},
     "frames": [{"keypoints": [[u, v, conf] x 8], "bbox": [cu, cv, b]}, ...]}

Skeleton file::

    {"format_version": 1,
     "joints": [{"name": "pelvis", "parent": -1, "offset": [x, y, z]}, ...],
     "foot_markers": {"left": {"big_toe": [..], "small_toe": [..], "heel": [..], "ankle": [..]},
                      "right": {...}}}
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from footlift.camera import CameraIntrinsics
from footlift.errors import FormatError
from footlift.kinematics import MARKER_NAMES, MotionSequence, Skeleton
from footlift.synth import ObservationSequence

FORMAT_VERSION = 1


def write_json(path, obj) -> None:
    """Deterministic JSON, written to a temporary file and renamed into place."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise FormatError(f"{path}: expected a JSON object")
    if obj.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format_version {obj.get('format_version')!r}")
    return obj


def _array(value, shape, what, path) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise FormatError(f"{path}: {what} is not numeric") from None
    if arr.shape != shape:
        raise FormatError(f"{path}: {what} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"{path}: {what} contains non-finite values")
    return arr


def _frames(obj, path) -> list:
    frames = obj.get("frames")
    if not isinstance(frames, list) or not frames:
        raise FormatError(f"{path}: 'frames' must be a non-empty list")
    return frames


def _fps(obj, path) -> float:
    fps = obj.get("fps")
    if not isinstance(fps, (int, float)) or not fps > 0:
        raise FormatError(f"{path}: 'fps' must be a positive number")
    return float(fps)


# --- skeleton -------------------------------------------------------------

def skeleton_to_dict(skeleton: Skeleton) -> dict:
    markers = {}
    for side, key in enumerate(("left", "right")):
        markers[key] = {name: skeleton.foot_markers[side, k].tolist() for k, name in enumerate(MARKER_NAMES)}
    return {
        "format_version": FORMAT_VERSION,
        "joints": [{"name": n, "parent": p, "offset": o.tolist()}
                   for n, p, o in zip(skeleton.names, skeleton.parents, skeleton.offsets)],
        "foot_markers": markers,
    }


def skeleton_from_dict(obj: dict, path="<skeleton>") -> Skeleton:
    try:
        joints = obj["joints"]
        names = tuple(j["name"] for j in joints)
        parents = tuple(int(j["parent"]) for j in joints)
        offsets = _array([j["offset"] for j in joints], (len(joints), 3), "joint offsets", path)
        markers = _array([[obj["foot_markers"][side][name] for name in MARKER_NAMES]
                          for side in ("left", "right")], (2, 4, 3), "foot markers", path)
        return Skeleton(names, parents, offsets, markers)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed skeleton ({exc!r})") from exc
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def save_skeleton(path, skeleton: Skeleton) -> None:
    write_json(path, skeleton_to_dict(skeleton))


def load_skeleton(path) -> Skeleton:
    return skeleton_from_dict(read_json(path), path)


# --- motion ---------------------------------------------------------------

def motion_to_dict(seq: MotionSequence, skeleton: Skeleton | str | None = None) -> dict:
    if isinstance(skeleton, Skeleton):
        skel = skeleton_to_dict(skeleton)
    else:
        skel = skeleton
    return {
        "format_version": FORMAT_VERSION,
        "fps": float(seq.fps),
        "skeleton": skel,
        "frames": [{"rot6d": r.tolist(), "trans": t.tolist()} for r, t in zip(seq.rot6d, seq.trans)],
    }


def motion_from_dict(obj: dict, path="<motion>", num_joints: int = 9) -> tuple[MotionSequence, Skeleton | None]:
    fps = _fps(obj, path)
    frames = _frames(obj, path)
    try:
        rot6d = _array([f["rot6d"] for f in frames], (len(frames), num_joints, 6), "rot6d", path)
        trans = _array([f["trans"] for f in frames], (len(frames), 3), "trans", path)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed frame ({exc!r})") from exc
    skel = obj.get("skeleton")
    skeleton = None
    if isinstance(skel, dict):
        skeleton = skeleton_from_dict(skel, path)
    elif isinstance(skel, str) and skel:
        skel_path = Path(skel)
        if not skel_path.is_absolute():
            skel_path = Path(path).parent / skel_path
        skeleton = load_skeleton(skel_path)
    return MotionSequence(fps, rot6d, trans), skeleton


def save_motion(path, seq: MotionSequence, skeleton: Skeleton | str | None = None) -> None:
    write_json(path, motion_to_dict(seq, skeleton))


def load_motion(path) -> tuple[MotionSequence, Skeleton | None]:
    return motion_from_dict(read_json(path), path)


# --- observations ---------------------------------------------------------

def observation_to_dict(obs: ObservationSequence) -> dict:
    cam = obs.camera
    return {
        "format_version": FORMAT_VERSION,
        "fps": float(obs.fps),
        "camera": {"f": cam.f, "cx": cam.cx, "cy": cam.cy, "width": cam.width, "height": cam.height},
        "frames": [{"keypoints": k.tolist(), "bbox": b.tolist()} for k, b in zip(obs.keypoints, obs.bbox)],
    }


def observation_from_dict(obj: dict, path="<observation>") -> ObservationSequence:
    fps = _fps(obj, path)
    frames = _frames(obj, path)
    try:
        cam = CameraIntrinsics(**{k: float(obj["camera"][k]) for k in ("f", "cx", "cy", "width", "height")})
        kps = _array([f["keypoints"] for f in frames], (len(frames), 8, 3), "keypoints", path)
        bbox = _array([f["bbox"] for f in frames], (len(frames), 3), "bbox", path)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed observation ({exc!r})") from exc
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if np.any(bbox[:, 2] <= 0):
        raise FormatError(f"{path}: bbox sizes must be positive")
    return ObservationSequence(fps, cam, kps, bbox)


def save_observation(path, obs: ObservationSequence) -> None:
    write_json(path, observation_to_dict(obs))


def load_observation(path) -> ObservationSequence:
    return observation_from_dict(read_json(path), path)
