"""Image-space helpers: resizing and boundary overlays."""

import numpy as np

from .labels import four_neighbor_boundary

OVERLAY_COLOR = (255, 0, 0)


def bilinear_resize(img, out_h, out_w):
    """Bilinear resample of [H, W, C] (or [H, W]) float data, center-aligned."""
    arr = np.asarray(img, np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[..., None]
    h, w = arr.shape[:2]
    if (h, w) == (out_h, out_w):
        out = arr.copy()
        return out[..., 0] if squeeze else out
    sy = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0, h - 1)
    sx = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0, w - 1)
    y0 = np.floor(sy).astype(np.intp)
    x0 = np.floor(sx).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (sy - y0)[:, None, None]
    fx = (sx - x0)[None, :, None]
    top = arr[y0][:, x0] * (1 - fx) + arr[y0][:, x1] * fx
    bot = arr[y1][:, x0] * (1 - fx) + arr[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    return out[..., 0] if squeeze else out


def nearest_resize(arr, out_h, out_w):
    """Nearest-neighbor resample, center-aligned; keeps the input dtype."""
    arr = np.asarray(arr)
    h, w = arr.shape[:2]
    if (h, w) == (out_h, out_w):
        return arr.copy()
    ys = np.minimum(((np.arange(out_h) + 0.5) * h / out_h).astype(np.intp), h - 1)
    xs = np.minimum(((np.arange(out_w) + 0.5) * w / out_w).astype(np.intp), w - 1)
    return arr[ys][:, xs].copy()


def overlay_boundaries(img, ids):
    """uint8 copy of the image with region boundaries painted pure red.

    Boundary pixels sit on the inner side of each region per the 4-neighbor
    rule.
    """
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        arr = (np.clip(arr, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    out = arr.copy()
    out[four_neighbor_boundary(ids)] = OVERLAY_COLOR
    return out
