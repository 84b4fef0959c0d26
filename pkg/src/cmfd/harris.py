"""Scaled Harris keypoints: second moment matrix and corner response on every pyramid level."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .config import HarrisConfig
from .image import as_gray, gaussian_kernel1d, separable_filter
from .scalespace import Pyramid


@dataclass
class Keypoint:
    x: float
    y: float
    octave: int  # 1-based
    interval: int  # 1-based
    response: float
    theta: float = 0.0

    def sort_key(self):
        return (self.octave, self.interval, self.y, self.x)


def gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences ``(I(x+1) - I(x-1)) / 2`` in x and y, replicated borders."""
    img = as_gray(img, 3)
    p = np.pad(img, 1, mode="edge")
    ix = (p[1:-1, 2:] - p[1:-1, :-2]) / 2.0
    iy = (p[2:, 1:-1] - p[:-2, 1:-1]) / 2.0
    return ix, iy


def second_moments(img: np.ndarray, window_sigma: float = 1.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gaussian-window sums of Ix^2, Iy^2 and IxIy (entries of M per pixel)."""
    ix, iy = gradients(img)
    g = gaussian_kernel1d(window_sigma)
    return (
        separable_filter(ix * ix, g),
        separable_filter(iy * iy, g),
        separable_filter(ix * iy, g),
    )


def harris_response(img: np.ndarray, cfg: HarrisConfig | None = None) -> np.ndarray:
    cfg = cfg or HarrisConfig()
    img = as_gray(img, 5)
    sxx, syy, sxy = second_moments(img, cfg.window_sigma)
    tr = sxx + syy
    return (sxx * syy - sxy * sxy) - cfg.k * tr * tr


def level_keypoints(cr: np.ndarray, cfg: HarrisConfig) -> tuple[np.ndarray, np.ndarray]:
    """Thresholded, non-max-suppressed corner positions ``(xs, ys)`` of one CR map,
    in raster order."""
    peak = float(cr.max()) if cr.size else 0.0
    if not peak > 0:
        return np.empty(0, dtype=np.intp), np.empty(0, dtype=np.intp)
    r = cfg.nms_radius
    size = 2 * r + 1
    cand = (cr >= cfg.t_cr_fraction * peak) & (cr > 0)
    cand &= cr == ndimage.maximum_filter(cr, size=size, mode="nearest")
    b = cfg.border
    h, w = cr.shape
    cand[: min(b, h), :] = False
    cand[max(h - b, 0) :, :] = False
    cand[:, : min(b, w)] = False
    cand[:, max(w - b, 0) :] = False

    ys, xs = np.nonzero(cand)
    if r == 0 or ys.size == 0:
        return xs, ys
    # plateau ties: drop a candidate when an earlier (raster order) candidate
    # lies within the suppression window
    keep = np.ones(ys.size, dtype=bool)
    index = -np.ones(cr.shape, dtype=np.intp)
    index[ys, xs] = np.arange(ys.size)
    padded = np.pad(index, r, constant_values=-1)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if (dy, dx) >= (0, 0):
                continue
            nb = padded[ys + r + dy, xs + r + dx]
            keep &= nb < 0
    return xs[keep], ys[keep]


def extract_keypoints(pyr: Pyramid, cfg: HarrisConfig | None = None) -> list[Keypoint]:
    cfg = cfg or HarrisConfig()
    kps = []
    for o, octave in enumerate(pyr.levels, start=1):
        for i, level in enumerate(octave, start=1):
            cr = harris_response(level, cfg)
            xs, ys = level_keypoints(cr, cfg)
            kps.extend(
                Keypoint(float(x), float(y), o, i, float(cr[y, x])) for x, y in zip(xs.tolist(), ys.tolist())
            )
    kps.sort(key=Keypoint.sort_key)
    return kps


def write_keypoints_csv(path: str | Path, kps: list[Keypoint]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["octave", "interval", "x", "y", "response", "theta"])
        for kp in kps:
            writer.writerow([kp.octave, kp.interval, kp.x, kp.y, repr(kp.response), repr(kp.theta)])
