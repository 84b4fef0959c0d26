"""Low-level pixel primitives: the gray image contract, interpolation and filtering.

A gray image is a 2-D float64 numpy array indexed ``[row, col]`` (``[y, x]``)
holding intensities on the [0, 255] scale.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

MIN_SIDE = 16


class ImageError(ValueError):
    pass


def as_gray(img, min_side: int = 1) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ImageError(f"expected a 2-D gray image, got shape {arr.shape}")
    if min(arr.shape) < min_side:
        raise ImageError(f"image {arr.shape[1]}x{arr.shape[0]} smaller than {min_side}x{min_side}")
    if not np.all(np.isfinite(arr)):
        raise ImageError("image holds non-finite intensities")
    return arr


def gaussian_kernel1d(sigma: float, radius: int | None = None) -> np.ndarray:
    """Sampled Gaussian normalised to unit sum; radius defaults to ceil(3 sigma)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if radius is None:
        radius = int(math.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def separable_filter(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # symmetric kernel, so correlation == convolution; "nearest" replicates edges.
    # Filtering the offset from one reference pixel keeps constant images
    # bit-exact (the kernel only sums to 1 up to rounding).
    ref = img.flat[0] if img.size else 0.0
    out = ndimage.correlate1d(img - ref, kernel, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, kernel, axis=1, mode="nearest")
    out += ref
    return out


# Offsets closer than this to an integer are snapped, so exact lattice moves
# (translations, quarter turns) reproduce pixels bit-exactly.
_SNAP = 1e-9


def bilinear_sample(img: np.ndarray, xs, ys) -> np.ndarray:
    """Sample ``img`` at real coordinates ``(xs, ys)`` with bilinear interpolation.

    ``x`` indexes columns and ``y`` rows. Coordinates outside the image are
    clamped to the border. Works on arrays of any shape; the result has the
    broadcast shape of ``xs`` and ``ys``.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    xs, ys = np.broadcast_arrays(np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64))
    xs = _snap_clip(xs, w - 1.0)
    ys = _snap_clip(ys, h - 1.0)

    x0 = xs.astype(np.intp)  # coordinates are nonnegative, so truncation == floor
    y0 = ys.astype(np.intp)
    tx = xs - x0
    ty = ys - y0
    dx = (x0 < w - 1).astype(np.intp)
    dy = (y0 < h - 1) * w
    flat = img.ravel()
    i00 = y0 * w + x0
    v00 = flat.take(i00)
    v01 = flat.take(i00 + dx)
    i00 += dy
    v10 = flat.take(i00)
    v11 = flat.take(i00 + dx)

    # lerp form keeps constant neighbourhoods exact
    top = v00 + tx * (v01 - v00)
    bot = v10 + tx * (v11 - v10)
    return top + ty * (bot - top)


def _snap_clip(v: np.ndarray, hi: float) -> np.ndarray:
    r = np.rint(v)
    out = np.where(np.abs(v - r) < _SNAP, r, v)
    return np.clip(out, 0.0, hi, out=out)
