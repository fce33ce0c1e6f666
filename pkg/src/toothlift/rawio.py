"""Little-endian raw buffer and PNG helpers used by the stage commands."""

import json

import numpy as np
from PIL import Image

_DTYPES = {"int32": "<i4", "uint32": "<u4", "float32": "<f4", "float64": "<f8"}


def save_raw(array, path, dtype):
    """Write a 2-D array as packed little-endian values plus a JSON sidecar
    ({"width", "height", "dtype"}) at <path>.json.
    """
    if dtype not in _DTYPES:
        raise ValueError(f"unsupported raw dtype {dtype!r}")
    a = np.ascontiguousarray(array)
    if a.ndim != 2:
        raise ValueError("save_raw expects a 2-D array")
    with open(path, "wb") as fh:
        fh.write(a.astype(_DTYPES[dtype]).tobytes())
    with open(str(path) + ".json", "w") as fh:
        json.dump({"width": a.shape[1], "height": a.shape[0], "dtype": dtype}, fh)
        fh.write("\n")


def load_raw(path):
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    dtype = _DTYPES[meta["dtype"]]
    with open(path, "rb") as fh:
        data = fh.read()
    arr = np.frombuffer(data, dtype=dtype)
    return arr.reshape(meta["height"], meta["width"]).copy()


def save_png_rgb(rgb, path):
    """rgb in [0, 1] float -> 8-bit PNG."""
    img = np.clip(np.rint(np.asarray(rgb) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(img, mode="RGB").save(path, format="PNG")


def save_png_gray(values, path):
    """Integer array in 0..255 -> 8-bit grayscale PNG."""
    img = np.asarray(values)
    if img.dtype != np.uint8:
        if img.size and (img.min() < 0 or img.max() > 255):
            raise ValueError("grayscale values must fit in 0..255")
        img = img.astype(np.uint8)
    Image.fromarray(img, mode="L").save(path, format="PNG")


def load_png_gray(path):
    with Image.open(path) as img:
        return np.asarray(img.convert("L"))
