"""Central-difference verification of every analytic gradient.

grad_check compares fn's analytic gradient against (f(x+eps e_i) -
f(x-eps e_i)) / 2 eps per coordinate and reports the max relative error
with denominator max(|analytic|, |numeric|, 1e-8). The suite covers the
deformable-attention block (per parameter group) and all losses.
"""

from __future__ import annotations

import numpy as np

from . import deform_attn, losses

TOLERANCE = 1e-4
DEFAULT_EPS = 1e-5


def grad_check(fn, point, eps=DEFAULT_EPS):
    """Max relative error between fn's analytic gradient and central
    differences. fn maps a parameter vector to (scalar value, gradient).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    point = np.asarray(point, dtype=np.float64).ravel()
    value, grad = fn(point)
    if not np.isfinite(value):
        raise FloatingPointError("function value is not finite")
    grad = np.asarray(grad, dtype=np.float64).ravel()
    if grad.shape != point.shape:
        raise ValueError("gradient length does not match point")
    numeric = np.empty_like(point)
    for i in range(point.size):
        xp = point.copy()
        xp[i] += eps
        fp = fn(xp)[0]
        xm = point.copy()
        xm[i] -= eps
        fm = fn(xm)[0]
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError("function value is not finite near point")
        numeric[i] = (fp - fm) / (2.0 * eps)
    denom = np.maximum(np.maximum(np.abs(grad), np.abs(numeric)), 1e-8)
    return float((np.abs(grad - numeric) / denom).max())


def _attn_entry(group, seed):
    rng = np.random.default_rng(seed)
    fmap = rng.normal(size=(5, 7, 6)) * 0.7
    params = deform_attn.init_params(5, grid_stride=2, max_offset=1.3, seed=seed + 1)
    point = deform_attn.group_to_vector(params, group)

    def fn(vec):
        p = deform_attn.with_group_vector(params, group, vec)
        out, cache = deform_attn._forward_cache(fmap, p)
        grads = deform_attn.backward(cache, p, np.ones_like(out))
        return out.sum(), deform_attn.grads_to_vector(grads, group)

    return fn, point


def _matched_nll_entry(seed):
    rng = np.random.default_rng(seed)
    raw = rng.uniform(0.2, 1.0, size=(4, 17))
    probs0 = raw / raw.sum(axis=1, keepdims=True)
    pairs = ((0, 1), (2, 0), (3, 2))
    gt_classes = (3, 11, 0)

    def fn(vec):
        probs = vec.reshape(4, 17)
        value = losses.matched_class_nll(probs, pairs, gt_classes)
        grad = losses.matched_class_nll_grad(probs, pairs, gt_classes)
        return value, grad.ravel()

    return fn, probs0.ravel()


def _pair_entry(loss, grad, shape, seed, lo=0.1, hi=0.9):
    rng = np.random.default_rng(seed)
    pred = rng.uniform(lo, hi, size=shape)
    gt = (rng.random(shape) < 0.5).astype(np.float64)

    def fn(vec):
        p = vec.reshape(shape)
        return loss(p, gt), grad(p, gt).ravel()

    return fn, pred.ravel()


def _cross_entropy_entry(seed):
    rng = np.random.default_rng(seed)
    logits0 = rng.normal(size=(17, 4, 5))
    labels = rng.integers(0, 17, size=(4, 5))

    def fn(vec):
        logits = vec.reshape(17, 4, 5)
        return (losses.cross_entropy_loss(logits, labels),
                losses.cross_entropy_loss_grad(logits, labels).ravel())

    return fn, logits0.ravel()


def _total_entry(seed, fault=False):
    rng = np.random.default_rng(seed)
    comps0 = rng.uniform(0.2, 2.0, size=7)
    weights = losses.LossWeights()

    def fn(vec):
        value = losses.total_loss(losses.LossComponents(*vec), weights)
        grad = losses.total_loss_component_grad(weights)
        if fault:
            grad = grad * 2.0  # deliberate fault for --fault mode
        return value, grad

    return fn, comps0


def suite_entries(seed=0, fault=False):
    """Ordered (name, fn, point) tuples, one per registered op."""
    entries = [
        ("deform_attn/offset_net", *_attn_entry("offset_net", seed + 10)),
        ("deform_attn/qkv_proj", *_attn_entry("qkv_proj", seed + 20)),
        ("deform_attn/out_proj", *_attn_entry("out_proj", seed + 30)),
        ("loss/matched_class_nll", *_matched_nll_entry(seed + 40)),
        ("loss/bce", *_pair_entry(losses.bce_loss, losses.bce_loss_grad,
                                  (6, 5), seed + 50)),
        ("loss/dice", *_pair_entry(losses.dice_loss, losses.dice_loss_grad,
                                   (6, 5), seed + 60)),
        ("loss/confidence", *_pair_entry(losses.confidence_loss,
                                         losses.confidence_loss_grad,
                                         (16,), seed + 70)),
        ("loss/boundary", *_pair_entry(losses.boundary_loss,
                                       losses.boundary_loss_grad,
                                       (8, 8), seed + 80)),
        ("loss/cross_entropy", *_cross_entropy_entry(seed + 90)),
        ("loss/total", *_total_entry(seed + 100, fault=fault)),
    ]
    return entries


def run_suite(seed=0, eps=DEFAULT_EPS, fault=False):
    """{op name: max relative error} for the whole registry."""
    return {name: grad_check(fn, point, eps=eps)
            for name, fn, point in suite_entries(seed=seed, fault=fault)}
