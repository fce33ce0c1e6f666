"""Hungarian assignment and segmentation quality metrics.

All metrics operate on per-vertex class labels (0 = background, 1..16 =
teeth). Classes without ground-truth support are excluded from class-wise
means and reported as not-applicable (None).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import UndefinedMetricError
from .mesh import knn_matrix

N_TEETH = 16


@dataclass(frozen=True)
class AssignmentResult:
    """One-to-one matching: min(R, C) (row, column) pairs and their cost."""

    pairs: tuple
    total_cost: float


def hungarian(costs):
    """Minimum-cost one-to-one assignment.

    Rectangular matrices behave like padding the short side with a constant
    larger than any real cost: exactly min(R, C) pairs are returned and
    their summed cost is minimal.
    """
    costs = np.asarray(costs, dtype=np.float64)
    if costs.ndim != 2 or costs.size == 0:
        raise ValueError("cost matrix must be a non-empty 2-D array")
    if not np.isfinite(costs).all():
        raise ValueError("cost matrix entries must be finite")
    rows, cols = linear_sum_assignment(costs)
    pairs = tuple(zip(rows.tolist(), cols.tolist()))
    return AssignmentResult(pairs=pairs, total_cost=float(costs[rows, cols].sum()))


def overall_accuracy(pred, gt):
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError("label vectors must have equal length")
    return float(np.mean(pred == gt))


def tooth_miou(pred, gt):
    """(mean IoU over gt-supported tooth classes, per-class list of 16).

    per_class[c-1] is None when class c never occurs in gt; background is
    always excluded.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError("label vectors must have equal length")
    per_class = [None] * N_TEETH
    supported = []
    for c in range(1, N_TEETH + 1):
        in_gt = gt == c
        if not in_gt.any():
            continue
        in_pred = pred == c
        union = np.count_nonzero(in_gt | in_pred)
        inter = np.count_nonzero(in_gt & in_pred)
        iou = inter / union
        per_class[c - 1] = iou
        supported.append(iou)
    if not supported:
        raise UndefinedMetricError("ground truth contains no tooth class")
    return float(np.mean(supported)), per_class


def dice(pred, gt):
    """Mean Dice over gt-supported tooth classes."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError("label vectors must have equal length")
    scores = []
    for c in range(1, N_TEETH + 1):
        in_gt = gt == c
        if not in_gt.any():
            continue
        in_pred = pred == c
        inter = np.count_nonzero(in_gt & in_pred)
        scores.append(2.0 * inter / (np.count_nonzero(in_pred) + np.count_nonzero(in_gt)))
    if not scores:
        raise UndefinedMetricError("ground truth contains no tooth class")
    return float(np.mean(scores))


def boundary_vertices(labels, index, k=10):
    """Vertices with a differently-labeled vertex among their k nearest."""
    labels = np.asarray(labels)
    nbrs = knn_matrix(index, k)
    return (labels[nbrs] != labels[:, None]).any(axis=1)


def boundary_iou(pred, gt, index, k=10, mode="label-aware"):
    """IoU of the boundary-vertex regions of pred and gt.

    label-aware (default): the intersection additionally requires the
    vertex labels to agree; region-only: plain region overlap.
    """
    if mode not in ("label-aware", "region-only"):
        raise ValueError(f"unknown B-IoU mode {mode!r}")
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError("label vectors must have equal length")
    b_gt = boundary_vertices(gt, index, k)
    b_pred = boundary_vertices(pred, index, k)
    union = np.count_nonzero(b_gt | b_pred)
    if union == 0:
        raise UndefinedMetricError("no boundary vertices in pred or gt")
    inter = b_gt & b_pred
    if mode == "label-aware":
        inter = inter & (pred == gt)
    return float(np.count_nonzero(inter) / union)


def group_ious(per_class_iou):
    """Collapse 16 per-class values into the 8 symmetric groups (c, c+8).

    Entries may be None (not applicable); a group with both classes absent
    is None as well.
    """
    if len(per_class_iou) != N_TEETH:
        raise ValueError("expected 16 per-class values")
    groups = []
    for g in range(8):
        vals = [v for v in (per_class_iou[g], per_class_iou[g + 8]) if v is not None]
        groups.append(float(np.mean(vals)) if vals else None)
    return groups


@dataclass(frozen=True)
class MetricsReport:
    oa: float
    t_miou: float
    b_iou: float
    dice: float
    per_class_iou: tuple
    per_group_iou: tuple

    def to_dict(self):
        return {
            "oa": self.oa,
            "t_miou": self.t_miou,
            "b_iou": self.b_iou,
            "dice": self.dice,
            "per_class_iou": list(self.per_class_iou),
            "per_group_iou": list(self.per_group_iou),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d):
        return cls(oa=d["oa"], t_miou=d["t_miou"], b_iou=d["b_iou"],
                   dice=d["dice"], per_class_iou=tuple(d["per_class_iou"]),
                   per_group_iou=tuple(d["per_group_iou"]))


def evaluate(pred, gt, index, k=10, biou_mode="label-aware"):
    """Full metric report for one mesh."""
    t, per_class = tooth_miou(pred, gt)
    return MetricsReport(
        oa=overall_accuracy(pred, gt),
        t_miou=t,
        b_iou=boundary_iou(pred, gt, index, k=k, mode=biou_mode),
        dice=dice(pred, gt),
        per_class_iou=tuple(per_class),
        per_group_iou=tuple(group_ious(per_class)),
    )
