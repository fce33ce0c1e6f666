"""Training losses for the three adapter networks of the 2D segmenter, with
analytic gradients.

total = w_classifier * L_cls + w_generator * (w_bce L_bce + w_dice L_dice +
w_confidence L_conf) + w_refiner * (w_ce L_ce + w_dice L_dice' +
w_boundary L_boundary). Default top-level weights are 1.0 / 1.0 / 2.0 and
all sub-weights 1.0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-12

SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T


@dataclass(frozen=True)
class LossWeights:
    classifier: float = 1.0
    generator: float = 1.0
    refiner: float = 2.0
    bce: float = 1.0
    dice: float = 1.0
    confidence: float = 1.0
    ce: float = 1.0
    refiner_dice: float = 1.0
    boundary: float = 1.0

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"loss weight {name} must be finite and >= 0")


@dataclass(frozen=True)
class LossComponents:
    """Raw sub-loss values entering the weighted total."""

    classifier_nll: float
    bce: float
    dice: float
    confidence: float
    ce: float
    refiner_dice: float
    boundary: float


def matched_class_nll(probs, pairs, gt_classes):
    """Negative log-likelihood summed over matched (prediction, target)
    pairs: -sum log probs[i, class(j)]. Probabilities below 1e-12 are
    clamped (with a warning).
    """
    probs = np.asarray(probs, dtype=np.float64)
    total = 0.0
    for i, j in pairs:
        p = probs[i, int(gt_classes[j])]
        if p < PROB_FLOOR:
            warnings.warn("matched probability clamped at 1e-12", stacklevel=2)
            p = PROB_FLOOR
        total -= np.log(p)
    return float(total)


def matched_class_nll_grad(probs, pairs, gt_classes):
    probs = np.asarray(probs, dtype=np.float64)
    grad = np.zeros_like(probs)
    for i, j in pairs:
        c = int(gt_classes[j])
        grad[i, c] -= 1.0 / max(probs[i, c], PROB_FLOOR)
    return grad


def dice_loss(pred, gt, smooth=1.0):
    """1 - (2 sum(pred*gt) + s) / (sum(pred) + sum(gt) + s)."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError("pred/gt shapes differ")
    num = 2.0 * (pred * gt).sum() + smooth
    den = pred.sum() + gt.sum() + smooth
    return float(1.0 - num / den)


def dice_loss_grad(pred, gt, smooth=1.0):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    num = 2.0 * (pred * gt).sum() + smooth
    den = pred.sum() + gt.sum() + smooth
    return -(2.0 * gt * den - num) / den ** 2


def bce_loss(pred, gt):
    """Mean binary cross-entropy; inputs clamped to [1e-12, 1 - 1e-12]."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError("pred/gt shapes differ")
    p = np.clip(pred, PROB_FLOOR, 1.0 - PROB_FLOOR)
    return float(-np.mean(gt * np.log(p) + (1.0 - gt) * np.log(1.0 - p)))


def bce_loss_grad(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    p = np.clip(pred, PROB_FLOOR, 1.0 - PROB_FLOOR)
    inside = (pred > PROB_FLOOR) & (pred < 1.0 - PROB_FLOOR)
    return (-gt / p + (1.0 - gt) / (1.0 - p)) * inside / pred.size


def confidence_loss(pred_conf, gt_presence):
    """BCE between the 16 instance confidences and the presence indicators."""
    pred_conf = np.asarray(pred_conf, dtype=np.float64).reshape(16)
    gt_presence = np.asarray(gt_presence, dtype=np.float64).reshape(16)
    return bce_loss(pred_conf, gt_presence)


def confidence_loss_grad(pred_conf, gt_presence):
    return bce_loss_grad(np.asarray(pred_conf, dtype=np.float64).reshape(16),
                         np.asarray(gt_presence, dtype=np.float64).reshape(16))


def _sobel(img, kernel):
    """3x3 correlation with replicate-border padding."""
    p = np.pad(img, 1, mode="edge")
    out = np.zeros_like(img, dtype=np.float64)
    for dy in range(3):
        for dx in range(3):
            out += kernel[dy, dx] * p[dy:dy + img.shape[0], dx:dx + img.shape[1]]
    return out


def sobel_gradients(img):
    """(Sx * img, Sy * img) with replicate padding."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 3 or img.shape[1] < 3:
        raise ValueError("image must be 2-D and at least 3x3")
    return _sobel(img, SOBEL_X), _sobel(img, SOBEL_Y)


def boundary_loss(pred, gt):
    """Mean over pixels of |Sx*pred - Sx*gt| + |Sy*pred - Sy*gt|."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError("pred/gt shapes differ")
    gx_p, gy_p = sobel_gradients(pred)
    gx_g, gy_g = sobel_gradients(gt)
    return float(np.mean(np.abs(gx_p - gx_g) + np.abs(gy_p - gy_g)))


def _sobel_adjoint(grad, kernel, shape):
    """Adjoint of _sobel for replicate padding: scatter into the padded
    buffer, then fold the border rows/columns back inside."""
    h, w = shape
    pad = np.zeros((h + 2, w + 2))
    for dy in range(3):
        for dx in range(3):
            pad[dy:dy + h, dx:dx + w] += kernel[dy, dx] * grad
    out = pad[1:-1, 1:-1].copy()
    out[0, :] += pad[0, 1:-1]
    out[-1, :] += pad[-1, 1:-1]
    out[:, 0] += pad[1:-1, 0]
    out[:, -1] += pad[1:-1, -1]
    out[0, 0] += pad[0, 0]
    out[0, -1] += pad[0, -1]
    out[-1, 0] += pad[-1, 0]
    out[-1, -1] += pad[-1, -1]
    return out


def boundary_loss_grad(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    gx_p, gy_p = sobel_gradients(pred)
    gx_g, gy_g = sobel_gradients(gt)
    n = pred.size
    gx = _sobel_adjoint(np.sign(gx_p - gx_g) / n, SOBEL_X, pred.shape)
    gy = _sobel_adjoint(np.sign(gy_p - gy_g) / n, SOBEL_Y, pred.shape)
    return gx + gy


def cross_entropy_loss(logits, labels):
    """Mean 17-class cross-entropy over softmaxed per-pixel logits.

    logits: (17, H, W); labels: (H, W) integer classes.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 3 or logits.shape[0] != 17:
        raise ValueError("logits must be (17, H, W)")
    if labels.shape != logits.shape[1:]:
        raise ValueError("labels shape does not match logits")
    m = logits.max(axis=0)
    lse = m + np.log(np.exp(logits - m).sum(axis=0))
    picked = np.take_along_axis(logits, labels[None].astype(np.int64), axis=0)[0]
    return float(np.mean(lse - picked))


def cross_entropy_loss_grad(logits, labels):
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    m = logits.max(axis=0)
    e = np.exp(logits - m)
    soft = e / e.sum(axis=0)
    onehot = np.zeros_like(logits)
    np.put_along_axis(onehot, labels[None].astype(np.int64), 1.0, axis=0)
    return (soft - onehot) / labels.size


def total_loss(components, weights=LossWeights()):
    """Weighted combination of all sub-losses."""
    c = components
    w = weights
    generator = w.bce * c.bce + w.dice * c.dice + w.confidence * c.confidence
    refiner = w.ce * c.ce + w.refiner_dice * c.refiner_dice + w.boundary * c.boundary
    return float(w.classifier * c.classifier_nll
                 + w.generator * generator
                 + w.refiner * refiner)


def total_loss_component_grad(weights=LossWeights()):
    """d total / d components, in LossComponents field order."""
    w = weights
    return np.array([
        w.classifier,
        w.generator * w.bce,
        w.generator * w.dice,
        w.generator * w.confidence,
        w.refiner * w.ce,
        w.refiner * w.refiner_dice,
        w.refiner * w.boundary,
    ])
