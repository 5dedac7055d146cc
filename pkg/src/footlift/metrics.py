"""Foot-specific evaluation metrics.

Marker arrays use the eight-point layout of
:func:`footlift.kinematics.foot_keypoints_3d` (per foot: big toe, small toe,
heel, ankle).  Metrics that concern foot keypoints only use the big toe,
small toe and heel of each foot.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from footlift import camera, kinematics, rotmath
from footlift.errors import (DegenerateInput, LengthMismatch, NoVisibleKeypoints,
                             SequenceTooShort)

FOOT_IDX = ((0, 1, 2), (4, 5, 6))
TOE_HEEL_IDX = FOOT_IDX[0] + FOOT_IDX[1]
PCK_THRESHOLD = 0.05
SCALE_EPS = 1e-12


def _check_lengths(a, b):
    if np.shape(a) != np.shape(b):
        raise LengthMismatch(f"prediction shape {np.shape(a)} != ground truth shape {np.shape(b)}")


def ajae(pred_global, gt_global, return_counts: bool = False):
    """Mean geodesic angle (degrees) between predicted and ground-truth global ankles.

    Inputs are (L, 2, 3, 3).  Frames whose ground truth contains NaN are
    excluded; with ``return_counts`` the numbers of used and skipped ankle
    rotations are returned too.
    """
    pred_global, gt_global = np.asarray(pred_global), np.asarray(gt_global)
    _check_lengths(pred_global, gt_global)
    ok = np.all(np.isfinite(gt_global), axis=(-1, -2))
    angles = rotmath.geodesic_angle_deg(pred_global[ok], gt_global[ok])
    value = float(angles.mean()) if angles.size else math.nan
    if return_counts:
        return value, int(ok.sum()), int((~ok).sum())
    return value


def _optimal_scale(pred, gt):
    """Least-squares s minimizing |s * pred - gt|^2 over the trailing two axes."""
    pp = np.sum(pred * pred, axis=(-1, -2))
    return np.sum(pred * gt, axis=(-1, -2)) / np.where(pp < SCALE_EPS, np.nan, pp), pp


def n_mpjpe_f(pred_markers, gt_markers) -> float:
    """Scale-normalized foot keypoint error in millimeters, centered per foot and frame."""
    pred_markers, gt_markers = np.asarray(pred_markers), np.asarray(gt_markers)
    _check_lengths(pred_markers, gt_markers)
    errs = []
    for idx in FOOT_IDX:
        p = pred_markers[..., idx, :]
        g = gt_markers[..., idx, :]
        p = p - p.mean(axis=-2, keepdims=True)
        g = g - g.mean(axis=-2, keepdims=True)
        s, pp = _optimal_scale(p, g)
        if np.any(pp < SCALE_EPS):
            raise DegenerateInput("predicted foot keypoints collapse to a point")
        errs.append(np.linalg.norm(s[..., None, None] * p - g, axis=-1))
    return float(np.mean(errs) * 1000.0)


def _box_size(bbox):
    box = np.asarray(bbox, dtype=np.float64)
    return box[..., 2] if box.ndim else box


def pck_f(pred_2d, gt_2d, bbox, threshold: float = PCK_THRESHOLD, visibility=None) -> float:
    """Fraction of visible toe/heel keypoints within ``threshold`` box sizes (inclusive)."""
    pred_2d, gt_2d = np.asarray(pred_2d), np.asarray(gt_2d)
    _check_lengths(pred_2d, gt_2d)
    vis = np.ones(gt_2d.shape[:-1], bool) if visibility is None else np.asarray(visibility, bool)
    idx = list(TOE_HEEL_IDX)
    dist = np.linalg.norm(pred_2d[..., idx, :] - gt_2d[..., idx, :], axis=-1)
    size = np.asarray(_box_size(bbox), dtype=np.float64)
    ratio = dist / size[..., None]
    vis = vis[..., idx]
    if not vis.any():
        raise NoVisibleKeypoints("no visible foot keypoints to score")
    return float(np.mean(ratio[vis] <= threshold))


def n_fke_2d(pred_2d, gt_2d, bbox, visibility=None, return_counts: bool = False):
    """Box-normalized, per-foot centered and scale-aligned 2D keypoint error.

    Feet with fewer than two visible toe/heel keypoints (or a degenerate
    prediction) are skipped; ``return_counts`` also reports evaluated and
    skipped feet.
    """
    pred_2d, gt_2d = np.asarray(pred_2d, np.float64), np.asarray(gt_2d, np.float64)
    _check_lengths(pred_2d, gt_2d)
    vis = np.ones(gt_2d.shape[:-1], bool) if visibility is None else np.asarray(visibility, bool)
    box = np.asarray(bbox, dtype=np.float64)
    pn = camera.normalize_keypoints(pred_2d, box)
    gn = camera.normalize_keypoints(gt_2d, box)
    errors, skipped = [], 0
    for frame in range(gt_2d.shape[0]):
        for idx in FOOT_IDX:
            sel = [i for i in idx if vis[frame, i]]
            if len(sel) < 2:
                skipped += 1
                continue
            p = pn[frame, sel] - pn[frame, sel].mean(axis=0)
            g = gn[frame, sel] - gn[frame, sel].mean(axis=0)
            pp = float(np.sum(p * p))
            if pp < SCALE_EPS:
                skipped += 1
                continue
            s = float(np.sum(p * g)) / pp
            errors.append(np.linalg.norm(s * p - g, axis=-1).mean())
    value = float(np.mean(errors)) if errors else math.nan
    if return_counts:
        return value, len(errors), skipped
    return value


def accel_f(pred_markers, gt_markers, fps: float) -> float:
    """Mean acceleration error (m/s^2) of toe/heel markers from second central differences."""
    pred_markers, gt_markers = np.asarray(pred_markers), np.asarray(gt_markers)
    _check_lengths(pred_markers, gt_markers)
    if pred_markers.shape[0] < 3:
        raise SequenceTooShort("acceleration needs at least three frames")
    idx = list(TOE_HEEL_IDX)

    def accel(x):
        x = x[:, idx]
        return (x[2:] - 2 * x[1:-1] + x[:-2]) * fps ** 2

    return float(np.linalg.norm(accel(pred_markers) - accel(gt_markers), axis=-1).mean())


# --- reports --------------------------------------------------------------

REPORT_FIELDS = ("ajae_deg", "n_mpjpe_f_mm", "pck_f", "n_fke_2d", "accel_f")


@dataclass
class EvalReport:
    name: str
    ajae_deg: float
    n_mpjpe_f_mm: float
    pck_f: float
    n_fke_2d: float
    accel_f: float
    frames: int
    ankles_evaluated: int = 0
    ankles_skipped: int = 0
    keypoints_evaluated: int = 0
    feet_evaluated: int = 0
    feet_skipped: int = 0
    ajae_trace: list = field(default_factory=list)  # per-frame mean over both ankles
    sequences: list = field(default_factory=list)

    def row(self) -> dict:
        out = asdict(self)
        out.pop("sequences")
        out.pop("ajae_trace")
        return out

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        rows = [s.row() for s in self.sequences] or [self.row()]
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()


def evaluate_sequence(name: str, pred_seq, gt_seq, skeleton, cam, bbox, visibility=None) -> EvalReport:
    """All five metrics for one predicted motion against ground truth.

    2D metrics compare projections of predicted and ground-truth markers,
    with ``bbox`` (L, 3) as the person box.
    """
    if len(pred_seq) != len(gt_seq):
        raise LengthMismatch(f"{name}: prediction has {len(pred_seq)} frames, ground truth {len(gt_seq)}")
    pred_fk = kinematics.sequence_fk(skeleton, pred_seq)
    gt_fk = kinematics.sequence_fk(skeleton, gt_seq)
    ankles = list(skeleton.ankles())
    ajae_value, used, skipped = ajae(pred_fk.global_rot[:, ankles], gt_fk.global_rot[:, ankles],
                                     return_counts=True)
    trace = rotmath.geodesic_angle_deg(pred_fk.global_rot[:, ankles], gt_fk.global_rot[:, ankles]).mean(-1)
    pm = kinematics.foot_keypoints_3d(pred_fk, skeleton)
    gm = kinematics.foot_keypoints_3d(gt_fk, skeleton)
    p2, g2 = camera.project(pm, cam), camera.project(gm, cam)
    vis = np.ones(g2.shape[:-1], bool) if visibility is None else np.asarray(visibility, bool)
    fke, feet, feet_skipped = n_fke_2d(p2, g2, bbox, vis, return_counts=True)
    return EvalReport(
        name=name,
        ajae_deg=ajae_value,
        n_mpjpe_f_mm=n_mpjpe_f(pm, gm),
        pck_f=pck_f(p2, g2, bbox, PCK_THRESHOLD, vis),
        n_fke_2d=fke,
        accel_f=accel_f(pm, gm, gt_seq.fps) if len(gt_seq) >= 3 else math.nan,
        frames=len(gt_seq),
        ankles_evaluated=used,
        ankles_skipped=skipped,
        keypoints_evaluated=int(vis[:, list(TOE_HEEL_IDX)].sum()),
        feet_evaluated=feet,
        feet_skipped=feet_skipped,
        ajae_trace=trace.tolist(),
    )


def aggregate(reports: list[EvalReport], name: str = "all") -> EvalReport:
    """Count-weighted means over sequences; the inputs are kept under ``sequences``."""
    def wmean(key, weight):
        vals = [(getattr(r, key), getattr(r, weight)) for r in reports if not math.isnan(getattr(r, key))]
        total = sum(w for _, w in vals)
        return sum(v * w for v, w in vals) / total if total else math.nan

    return EvalReport(
        name=name,
        ajae_deg=wmean("ajae_deg", "ankles_evaluated"),
        n_mpjpe_f_mm=wmean("n_mpjpe_f_mm", "frames"),
        pck_f=wmean("pck_f", "keypoints_evaluated"),
        n_fke_2d=wmean("n_fke_2d", "feet_evaluated"),
        accel_f=wmean("accel_f", "frames"),
        frames=sum(r.frames for r in reports),
        ankles_evaluated=sum(r.ankles_evaluated for r in reports),
        ankles_skipped=sum(r.ankles_skipped for r in reports),
        keypoints_evaluated=sum(r.keypoints_evaluated for r in reports),
        feet_evaluated=sum(r.feet_evaluated for r in reports),
        feet_skipped=sum(r.feet_skipped for r in reports),
        sequences=list(reports),
    )
