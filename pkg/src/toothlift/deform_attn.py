"""Deformable global attention over a feature map, with analytic gradients.

The block resamples the input feature map at offset-deformed grid points,
runs single-head global attention over the resampled tokens (query, key and
value are all projected from the deformed tokens), projects the result,
bilinearly upsamples it back to the input resolution and adds it to the
input through a skip connection.

Offsets come from a two-layer pointwise network applied to the features at
the undeformed grid points:

    offsets = max_offset * tanh(W2 @ tanh(W1 x + b1) + b2)

Everything is float64 numpy; backward() returns parameter gradients that
the gradient-check harness validates against central differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

PARAM_FIELDS = ("w1", "b1", "w2", "b2", "wq", "wk", "wv", "wo")
PARAM_GROUPS = {
    "offset_net": ("w1", "b1", "w2", "b2"),
    "qkv_proj": ("wq", "wk", "wv"),
    "out_proj": ("wo",),
}


@dataclass(frozen=True)
class DeformAttnParams:
    """Offset-network and projection weights.

    w1: (hidden, C), b1: (hidden,), w2: (2, hidden), b2: (2,) form the
    offset network; wq/wk/wv/wo are (C, C) projections. grid_stride spaces
    the reference grid; offsets are tanh-bounded by max_offset pixels.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    grid_stride: int = 2
    max_offset: float = 2.0

    def __post_init__(self):
        for name in PARAM_FIELDS:
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, arr)
        if self.grid_stride < 1:
            raise ValueError("grid_stride must be >= 1")
        if self.max_offset < 0:
            raise ValueError("max_offset must be >= 0")

    @property
    def channels(self):
        return self.w1.shape[1]


def init_params(channels, hidden=None, grid_stride=2, max_offset=2.0, seed=0):
    hidden = channels if hidden is None else hidden
    rng = np.random.default_rng(seed)

    def mat(rows, cols):
        return rng.normal(size=(rows, cols)) / np.sqrt(cols)

    return DeformAttnParams(
        w1=mat(hidden, channels), b1=rng.normal(size=hidden) * 0.1,
        w2=mat(2, hidden), b2=rng.normal(size=2) * 0.1,
        wq=mat(channels, channels), wk=mat(channels, channels),
        wv=mat(channels, channels), wo=mat(channels, channels),
        grid_stride=grid_stride, max_offset=max_offset)


def zero_offset_params(params):
    """Copy with the offset network zeroed (undeformed sampling)."""
    return replace(params,
                   w1=np.zeros_like(params.w1), b1=np.zeros_like(params.b1),
                   w2=np.zeros_like(params.w2), b2=np.zeros_like(params.b2))


def reference_grid(h, w, stride):
    """Uniform cell-center points, row-major: cell (gy, gx) of size
    stride x stride has its center at (gx*stride + stride/2, gy*stride +
    stride/2) in continuous texel coordinates (texel (i, j) spans
    [j, j+1) x [i, i+1)).
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    gh = -(-h // stride)
    gw = -(-w // stride)
    gy, gx = np.meshgrid(np.arange(gh), np.arange(gw), indexing="ij")
    pts = np.empty((gh * gw, 2))
    pts[:, 0] = gx.ravel() * stride + stride / 2.0
    pts[:, 1] = gy.ravel() * stride + stride / 2.0
    return pts


def _sample_cache(fmap, points):
    """Bilinear sampling bookkeeping shared by value and gradient paths."""
    c, h, w = fmap.shape
    px = np.asarray(points[:, 0], dtype=np.float64)
    py = np.asarray(points[:, 1], dtype=np.float64)
    x = np.clip(px, 0.5, w - 0.5)
    y = np.clip(py, 0.5, h - 0.5)
    gate_x = (px > 0.5) & (px < w - 0.5)
    gate_y = (py > 0.5) & (py < h - 0.5)
    xf = x - 0.5
    yf = y - 0.5
    x0 = np.floor(xf).astype(np.int64)
    y0 = np.floor(yf).astype(np.int64)
    tx = xf - x0
    ty = yf - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    return {
        "x0": x0, "x1": x1, "y0": y0, "y1": y1, "tx": tx, "ty": ty,
        "gate_x": gate_x, "gate_y": gate_y,
        "c00": fmap[:, y0, x0], "c10": fmap[:, y0, x1],
        "c01": fmap[:, y1, x0], "c11": fmap[:, y1, x1],
    }


def bilinear_sample(fmap, points):
    """Sample a (C, H, W) map at continuous (x, y) points; returns (P, C).

    Texel (i, j) has its center at (j + 0.5, i + 0.5); points are clamped
    to the centers of the border texels (replicate behavior).
    """
    fmap = np.asarray(fmap, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    s = _sample_cache(fmap, points)
    tx, ty = s["tx"], s["ty"]
    out = ((1 - ty) * ((1 - tx) * s["c00"] + tx * s["c10"])
           + ty * ((1 - tx) * s["c01"] + tx * s["c11"]))
    return out.T.copy()


def _sample_point_grad(s, d_tokens):
    """Gradient of sum(d_tokens * sampled) w.r.t. the sample points.

    d_tokens: (P, C). Returns (P, 2). Clamped coordinates get zero grad.
    """
    tx, ty = s["tx"], s["ty"]
    dx_ch = (1 - ty) * (s["c10"] - s["c00"]) + ty * (s["c11"] - s["c01"])
    dy_ch = (1 - tx) * (s["c01"] - s["c00"]) + tx * (s["c11"] - s["c10"])
    d = d_tokens.T  # (C, P)
    grad = np.empty((len(tx), 2))
    grad[:, 0] = (d * dx_ch).sum(axis=0) * s["gate_x"]
    grad[:, 1] = (d * dy_ch).sum(axis=0) * s["gate_y"]
    return grad


def _softmax(scores):
    m = scores.max(axis=1, keepdims=True)
    e = np.exp(scores - m)
    return e / e.sum(axis=1, keepdims=True)


def _forward_cache(fmap, params):
    fmap = np.asarray(fmap, dtype=np.float64)
    if fmap.ndim != 3:
        raise ValueError("feature map must be (C, H, W)")
    c, h, w = fmap.shape
    if c != params.channels:
        raise ValueError(f"feature map has {c} channels, params expect "
                         f"{params.channels}")
    stride = params.grid_stride
    grid = reference_grid(h, w, stride)
    gh = -(-h // stride)
    gw = -(-w // stride)

    x_grid = bilinear_sample(fmap, grid)                  # (G, C)
    z1 = x_grid @ params.w1.T + params.b1
    h1 = np.tanh(z1)
    z2 = h1 @ params.w2.T + params.b2
    t2 = np.tanh(z2)
    offsets = params.max_offset * t2
    points = grid + offsets

    samp = _sample_cache(fmap, points)
    tx, ty = samp["tx"], samp["ty"]
    tokens = ((1 - ty) * ((1 - tx) * samp["c00"] + tx * samp["c10"])
              + ty * ((1 - tx) * samp["c01"] + tx * samp["c11"])).T  # (G, C)

    q = tokens @ params.wq.T
    k = tokens @ params.wk.T
    v = tokens @ params.wv.T
    attn = _softmax(q @ k.T / np.sqrt(c))
    mixed = attn @ v
    y = mixed @ params.wo.T                                # (G, C)
    y_map = y.T.reshape(c, gh, gw)

    jj, ii = np.meshgrid(np.arange(w), np.arange(h))
    up_points = np.stack([(jj.ravel() + 0.5) / stride,
                          (ii.ravel() + 0.5) / stride], axis=1)
    up_cache = _sample_cache(y_map, up_points)
    utx, uty = up_cache["tx"], up_cache["ty"]
    up = ((1 - uty) * ((1 - utx) * up_cache["c00"] + utx * up_cache["c10"])
          + uty * ((1 - utx) * up_cache["c01"] + utx * up_cache["c11"]))
    out = fmap + up.reshape(c, h, w)

    cache = {
        "fmap": fmap, "grid": grid, "x_grid": x_grid, "h1": h1, "t2": t2,
        "samp": samp, "tokens": tokens, "q": q, "k": k, "v": v,
        "attn": attn, "mixed": mixed, "gh": gh, "gw": gw,
        "up_cache": up_cache, "shape": (c, h, w),
    }
    return out, cache


def forward(fmap, params):
    """Deformed-attention block output: input + attention branch."""
    out, _ = _forward_cache(fmap, params)
    return out


def backward(cache, params, d_out):
    """Parameter gradients of sum(d_out * forward(fmap, params))."""
    c, h, w = cache["shape"]
    gh, gw = cache["gh"], cache["gw"]
    d_out = np.asarray(d_out, dtype=np.float64).reshape(c, h, w)

    # upsample adjoint: scatter pixel grads into the (C, gh, gw) map
    u = cache["up_cache"]
    d_up = d_out.reshape(c, h * w)
    d_ymap = np.zeros((c, gh, gw))
    utx, uty = u["tx"], u["ty"]
    np.add.at(d_ymap, (slice(None), u["y0"], u["x0"]), d_up * (1 - utx) * (1 - uty))
    np.add.at(d_ymap, (slice(None), u["y0"], u["x1"]), d_up * utx * (1 - uty))
    np.add.at(d_ymap, (slice(None), u["y1"], u["x0"]), d_up * (1 - utx) * uty)
    np.add.at(d_ymap, (slice(None), u["y1"], u["x1"]), d_up * utx * uty)
    d_y = d_ymap.reshape(c, gh * gw).T                     # (G, C)

    tokens, q, k, v = cache["tokens"], cache["q"], cache["k"], cache["v"]
    attn, mixed = cache["attn"], cache["mixed"]
    d_wo = d_y.T @ mixed
    d_mixed = d_y @ params.wo
    d_attn = d_mixed @ v.T
    d_v = attn.T @ d_mixed
    d_scores = attn * (d_attn - (d_attn * attn).sum(axis=1, keepdims=True))
    scale = 1.0 / np.sqrt(c)
    d_q = d_scores @ k * scale
    d_k = d_scores.T @ q * scale
    d_wq = d_q.T @ tokens
    d_wk = d_k.T @ tokens
    d_wv = d_v.T @ tokens
    d_tokens = d_q @ params.wq + d_k @ params.wk + d_v @ params.wv

    d_points = _sample_point_grad(cache["samp"], d_tokens)
    d_t2 = d_points * params.max_offset
    d_z2 = d_t2 * (1.0 - cache["t2"] ** 2)
    d_w2 = d_z2.T @ cache["h1"]
    d_b2 = d_z2.sum(axis=0)
    d_h1 = d_z2 @ params.w2
    d_z1 = d_h1 * (1.0 - cache["h1"] ** 2)
    d_w1 = d_z1.T @ cache["x_grid"]
    d_b1 = d_z1.sum(axis=0)

    return {"w1": d_w1, "b1": d_b1, "w2": d_w2, "b2": d_b2,
            "wq": d_wq, "wk": d_wk, "wv": d_wv, "wo": d_wo}


# ---------------------------------------------------------------------------
# parameter (de)serialization and flattening


def group_to_vector(params, group):
    return np.concatenate([np.asarray(getattr(params, f)).ravel()
                           for f in PARAM_GROUPS[group]])


def with_group_vector(params, group, vector):
    vector = np.asarray(vector, dtype=np.float64)
    updates = {}
    pos = 0
    for f in PARAM_GROUPS[group]:
        shape = getattr(params, f).shape
        size = int(np.prod(shape))
        updates[f] = vector[pos:pos + size].reshape(shape)
        pos += size
    if pos != vector.size:
        raise ValueError("vector length does not match group")
    return replace(params, **updates)


def grads_to_vector(grads, group):
    return np.concatenate([np.asarray(grads[f]).ravel()
                           for f in PARAM_GROUPS[group]])


def save_params(params, path):
    """Flat little-endian float64 buffer plus a JSON shape manifest."""
    manifest = {
        "fields": [[f, list(getattr(params, f).shape)] for f in PARAM_FIELDS],
        "grid_stride": params.grid_stride,
        "max_offset": params.max_offset,
        "dtype": "float64",
    }
    flat = np.concatenate([getattr(params, f).ravel() for f in PARAM_FIELDS])
    with open(path, "wb") as fh:
        fh.write(flat.astype("<f8").tobytes())
    with open(str(path) + ".json", "w") as fh:
        json.dump(manifest, fh)
        fh.write("\n")


def load_params(path):
    with open(str(path) + ".json") as fh:
        manifest = json.load(fh)
    with open(path, "rb") as fh:
        flat = np.frombuffer(fh.read(), dtype="<f8")
    fields = {}
    pos = 0
    for name, shape in manifest["fields"]:
        size = int(np.prod(shape))
        fields[name] = flat[pos:pos + size].reshape(shape).copy()
        pos += size
    return DeformAttnParams(grid_stride=manifest["grid_stride"],
                            max_offset=manifest["max_offset"], **fields)
