"""Frame-level segmentation metrics: mask overlap F/P/R, boundary overlap
F/P/R, and Recall@tau, all EPC-aware."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InputError
from .matching import hungarian


@dataclass
class FrameMetrics:
    mask_f: float
    mask_p: float
    mask_r: float
    boundary_f: float
    boundary_p: float
    boundary_r: float
    recall_at: dict = field(default_factory=dict)  # threshold -> fraction


def _f_measure(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def _instances(pixels, table):
    """List of (epc, boolean mask) per labeled instance in a frame."""
    return [
        (table[int(i)], pixels == i)
        for i in np.unique(pixels)
        if i > 0
    ]


def mask_metrics(pred_pixels, pred_table, gt_pixels, gt_table):
    """Pixelwise precision/recall/F with Hungarian instance matching.

    Predicted instances are matched to ground-truth instances by maximum
    IoU; intersection pixels of a matched pair count as true positives only
    when the EPCs agree.  Precision over an empty prediction is 0 by
    convention.  Returns (F, P, R).
    """
    if pred_pixels.shape != gt_pixels.shape:
        raise InputError("prediction and ground truth dimensions differ")
    pred = _instances(pred_pixels, pred_table)
    gt = _instances(gt_pixels, gt_table)
    pred_fg = int((pred_pixels > 0).sum())
    gt_fg = int((gt_pixels > 0).sum())
    if pred_fg == 0 or gt_fg == 0:
        p = 1.0 if pred_fg == 0 and gt_fg == 0 else 0.0
        return _f_measure(p, p), p, p

    iou = np.zeros((len(pred), len(gt)))
    inter = np.zeros((len(pred), len(gt)))
    for i, (_, pm) in enumerate(pred):
        for j, (_, gm) in enumerate(gt):
            n = int((pm & gm).sum())
            inter[i, j] = n
            if n:
                iou[i, j] = n / int((pm | gm).sum())
    tp = 0
    for i, j, _ in hungarian(iou).pairs:
        if pred[i][0] == gt[j][0]:
            tp += inter[i, j]
    p = tp / pred_fg
    r = tp / gt_fg
    return _f_measure(p, r), p, r


def _boundaries(pixels):
    """Foreground pixels 4-adjacent to a different id (incl. background)."""
    out = np.zeros(pixels.shape, dtype=bool)
    p = pixels
    for axis, shift in ((0, 1), (0, -1), (1, 1), (1, -1)):
        shifted = np.roll(p, shift, axis=axis)
        # pixels rolled in from the opposite edge count as different
        edge = np.zeros(p.shape, dtype=bool)
        if axis == 0:
            edge[0 if shift == 1 else -1, :] = True
        else:
            edge[:, 0 if shift == 1 else -1] = True
        out |= (p > 0) & ((shifted != p) | edge)
    return out


def boundary_metrics(pred_pixels, pred_table, gt_pixels, gt_table, tol_px: int = 2):
    """Boundary precision/recall/F within a Chebyshev pixel tolerance,
    matched per EPC.  Returns (F, P, R)."""
    if pred_pixels.shape != gt_pixels.shape:
        raise InputError("prediction and ground truth dimensions differ")
    if tol_px < 0:
        raise InputError("tolerance must be >= 0")
    pred_b = _boundaries(pred_pixels)
    gt_b = _boundaries(gt_pixels)
    n_pred = int(pred_b.sum())
    n_gt = int(gt_b.sum())
    if n_pred == 0 or n_gt == 0:
        p = 1.0 if n_pred == 0 and n_gt == 0 else 0.0
        return _f_measure(p, p), p, p

    size = 2 * tol_px + 1
    epcs = set(pred_table.values()) | set(gt_table.values())
    hit_pred = 0
    hit_gt = 0
    for epc in sorted(epcs):
        pm = pred_b & np.isin(pred_pixels, [i for i, e in pred_table.items() if e == epc])
        gm = gt_b & np.isin(gt_pixels, [i for i, e in gt_table.items() if e == epc])
        if pm.any() and gm.any():
            gm_tol = ndimage.maximum_filter(gm.astype(np.uint8), size=size).astype(bool)
            pm_tol = ndimage.maximum_filter(pm.astype(np.uint8), size=size).astype(bool)
            hit_pred += int((pm & gm_tol).sum())
            hit_gt += int((gm & pm_tol).sum())
    p = hit_pred / n_pred
    r = hit_gt / n_gt
    return _f_measure(p, r), p, r


def recall_at(pred_pixels, pred_table, gt_pixels, gt_table, tau: float = 0.75) -> float:
    """Fraction of GT instances whose best same-EPC predicted IoU >= tau."""
    if not (0 < tau <= 1):
        raise InputError("tau must be in (0, 1]")
    gt = _instances(gt_pixels, gt_table)
    if not gt:
        return 1.0
    pred = _instances(pred_pixels, pred_table)
    ok = 0
    for epc, gm in gt:
        best = 0.0
        for pepc, pm in pred:
            if pepc != epc:
                continue
            inter = int((pm & gm).sum())
            if inter:
                best = max(best, inter / int((pm | gm).sum()))
        if best >= tau:
            ok += 1
    return ok / len(gt)


def frame_metrics(pred_pixels, pred_table, gt_pixels, gt_table,
                  boundary_tol_px: int = 2, recall_taus=(0.75,)) -> FrameMetrics:
    mf, mp, mr = mask_metrics(pred_pixels, pred_table, gt_pixels, gt_table)
    bf, bp, br = boundary_metrics(pred_pixels, pred_table, gt_pixels, gt_table, boundary_tol_px)
    recalls = {tau: recall_at(pred_pixels, pred_table, gt_pixels, gt_table, tau)
               for tau in recall_taus}
    return FrameMetrics(mask_f=mf, mask_p=mp, mask_r=mr,
                        boundary_f=bf, boundary_p=bp, boundary_r=br, recall_at=recalls)


def sequence_metrics(pred_frames, gt_frames, boundary_tol_px: int = 2,
                     sample_stride: int = 10, recall_taus=(0.75,)) -> FrameMetrics:
    """Mean frame metrics over a strided frame subset.

    ``pred_frames`` / ``gt_frames`` are lists of (pixels, label table).
    """
    if len(pred_frames) != len(gt_frames):
        raise InputError("sequence lengths differ")
    picks = range(0, len(pred_frames), max(1, sample_stride))
    per_frame = [
        frame_metrics(pred_frames[i][0], pred_frames[i][1],
                      gt_frames[i][0], gt_frames[i][1],
                      boundary_tol_px, recall_taus)
        for i in picks
    ]
    n = len(per_frame)
    return FrameMetrics(
        mask_f=sum(m.mask_f for m in per_frame) / n,
        mask_p=sum(m.mask_p for m in per_frame) / n,
        mask_r=sum(m.mask_r for m in per_frame) / n,
        boundary_f=sum(m.boundary_f for m in per_frame) / n,
        boundary_p=sum(m.boundary_p for m in per_frame) / n,
        boundary_r=sum(m.boundary_r for m in per_frame) / n,
        recall_at={tau: sum(m.recall_at[tau] for m in per_frame) / n for tau in recall_taus},
    )
