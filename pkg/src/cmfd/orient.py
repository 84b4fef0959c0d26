"""Dominant gradient orientation per keypoint and oriented neighbourhood sampling."""

from __future__ import annotations

import math

import numpy as np

from .harris import Keypoint, gradients
from .image import as_gray, bilinear_sample

N_BINS = 10
BIN_WIDTH = 2 * math.pi / N_BINS
TWO_PI = 2 * math.pi

# Centred 4x4 grid, unit spacing; GRID_U varies along columns, GRID_V along rows
_OFFSETS = np.array([-1.5, -0.5, 0.5, 1.5])
GRID_V, GRID_U = np.meshgrid(_OFFSETS, _OFFSETS, indexing="ij")


def gradient_polar(level: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradient magnitude and full-quadrant angle in [0, 2pi); zero gradient gives 0."""
    ix, iy = gradients(level)
    m = np.hypot(ix, iy)
    theta = np.mod(np.arctan2(iy, ix), TWO_PI)
    # arctan2 may round a tiny negative angle up to exactly 2pi
    theta[theta >= TWO_PI] = 0.0
    theta[m == 0] = 0.0
    return m, theta


def angle_bins(theta: np.ndarray) -> np.ndarray:
    return np.floor(theta / BIN_WIDTH).astype(np.intp) % N_BINS


def orientation_histograms(m, theta, xs, ys, radius: int = 4) -> np.ndarray:
    """10-bin magnitude histograms over the (2r+1)^2 windows at integer ``(xs, ys)``."""
    xs = np.asarray(xs, dtype=np.intp)
    ys = np.asarray(ys, dtype=np.intp)
    d = np.arange(-radius, radius + 1)
    wy = ys[:, None, None] + d[None, :, None]
    wx = xs[:, None, None] + d[None, None, :]
    h, w = m.shape
    wy = np.clip(wy, 0, h - 1)
    wx = np.clip(wx, 0, w - 1)
    mags = m[wy, wx].reshape(len(xs), -1)
    bins = angle_bins(theta[wy, wx]).reshape(len(xs), -1)
    hist = np.zeros((len(xs), N_BINS))
    rows = np.repeat(np.arange(len(xs)), mags.shape[1])
    np.add.at(hist, (rows, bins.ravel()), mags.ravel())
    return hist


def dominant_angles(hist: np.ndarray) -> np.ndarray:
    # argmax keeps the lowest index on ties
    best = np.argmax(hist, axis=1)
    theta = (best + 0.5) * BIN_WIDTH
    theta[hist.max(axis=1) <= 0] = 0.0
    return theta


def refine_angles(m, theta, xs, ys, start, radius: int = 4, iterations: int = 5) -> np.ndarray:
    """Mean-shift the start angles to the magnitude-weighted mean gradient direction
    within one bin width, over the same windows as the histogram.

    The fixed point does not depend on where the bin edges fall, so it follows
    image rotations that are not multiples of the bin width.
    """
    xs = np.asarray(xs, dtype=np.intp)
    ys = np.asarray(ys, dtype=np.intp)
    d = np.arange(-radius, radius + 1)
    h, w = m.shape
    wy = np.clip(ys[:, None, None] + d[None, :, None], 0, h - 1)
    wx = np.clip(xs[:, None, None] + d[None, None, :], 0, w - 1)
    mags = m[wy, wx].reshape(len(xs), -1)
    ang = theta[wy, wx].reshape(len(xs), -1)
    ca, sa = np.cos(ang), np.sin(ang)
    gx, gy = mags * ca, mags * sa
    out = np.asarray(start, dtype=np.float64).copy()
    cos_w = math.cos(BIN_WIDTH)
    for _ in range(iterations):
        # cos(ang - out) without re-evaluating trig over the windows
        near = ca * np.cos(out)[:, None] + sa * np.sin(out)[:, None] >= cos_w
        sx = np.where(near, gx, 0.0).sum(axis=1)
        sy = np.where(near, gy, 0.0).sum(axis=1)
        moved = (sx != 0) | (sy != 0)
        out[moved] = np.arctan2(sy[moved], sx[moved])
    out = np.mod(out, TWO_PI)
    out[out >= TWO_PI] = 0.0
    return out


def assign_orientation(kp: Keypoint, polar: tuple[np.ndarray, np.ndarray], radius: int = 4) -> Keypoint:
    """Return ``kp`` with ``theta`` set to the centre of its strongest histogram bin."""
    m, theta = polar
    hist = orientation_histograms(m, theta, [int(round(kp.x))], [int(round(kp.y))], radius)
    kp.theta = float(dominant_angles(hist)[0])
    return kp


def oriented_grid(xs, ys, thetas, scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Positions of the rotated 4x4 grid around each centre: arrays of shape (N, 4, 4)."""
    xs = np.asarray(xs, dtype=np.float64).reshape(-1, 1, 1)
    ys = np.asarray(ys, dtype=np.float64).reshape(-1, 1, 1)
    t = np.asarray(thetas, dtype=np.float64).reshape(-1, 1, 1)
    c, s = np.cos(t), np.sin(t)
    u = GRID_U[None] * scale
    v = GRID_V[None] * scale
    return xs + c * u - s * v, ys + s * u + c * v


def sample_oriented_patch(level: np.ndarray, kp: Keypoint) -> np.ndarray:
    """4x4 bilinear samples on the keypoint-centred grid rotated by ``kp.theta``."""
    level = as_gray(level)
    gx, gy = oriented_grid([kp.x], [kp.y], [kp.theta])
    return bilinear_sample(level, gx[0], gy[0])


def orient_points(level: np.ndarray, xs, ys, radius: int = 4, refine: bool = True) -> np.ndarray:
    """Orientations for integer keypoint positions on one level."""
    m, theta = gradient_polar(level)
    start = dominant_angles(orientation_histograms(m, theta, xs, ys, radius))
    if not refine:
        return start
    return refine_angles(m, theta, xs, ys, start, radius)
