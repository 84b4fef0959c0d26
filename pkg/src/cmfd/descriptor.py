"""Composite keypoint descriptor: [u2 LBP histogram, riu2 LBP histogram, 4x4 DCT, singular values].

At the default configuration the blocks are 59 + 14 + 16 + 4 = 93 values long.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .config import DescriptorConfig
from .harris import Keypoint
from .image import as_gray, bilinear_sample
from .orient import oriented_grid
from .scalespace import level_to_original


def transitions(code: int, P: int) -> int:
    """Number of circular 0/1 transitions in the P-bit pattern."""
    rotated = ((code >> 1) | ((code & 1) << (P - 1))) & ((1 << P) - 1)
    return bin(code ^ rotated).count("1")


@lru_cache(maxsize=None)
def u2_table(P: int = 8) -> np.ndarray:
    """Code -> u2 bin: uniform codes take bins 0.. in increasing code order, the rest share the last bin."""
    lut = np.empty(1 << P, dtype=np.intp)
    n_uniform = P * (P - 1) + 2
    nxt = 0
    for code in range(1 << P):
        if transitions(code, P) <= 2:
            lut[code] = nxt
            nxt += 1
        else:
            lut[code] = n_uniform
    assert nxt == n_uniform
    lut.setflags(write=False)
    return lut


@lru_cache(maxsize=None)
def riu2_table(P: int) -> np.ndarray:
    lut = np.empty(1 << P, dtype=np.intp)
    for code in range(1 << P):
        lut[code] = bin(code).count("1") if transitions(code, P) <= 2 else P + 1
    lut.setflags(write=False)
    return lut


def u2_bin(code: int, P: int = 8) -> int:
    return int(u2_table(P)[code])


def riu2_bin(code: int, P: int) -> int:
    return int(riu2_table(P)[code])


def lbp_codes(level: np.ndarray, cx, cy, thetas, P: int, R: float, center=None) -> np.ndarray:
    """LBP codes at real centres, neighbours at angles ``theta + 2 pi p / P`` on radius R.

    Bit p is set when neighbour p is >= the (interpolated) centre value.
    ``cx``, ``cy`` and ``thetas`` broadcast together; the result has their shape.
    ``center`` may pass in already sampled centre values.
    """
    cx, cy, thetas = np.broadcast_arrays(
        np.asarray(cx, dtype=np.float64), np.asarray(cy, dtype=np.float64), np.asarray(thetas, dtype=np.float64)
    )
    if center is None:
        center = bilinear_sample(level, cx, cy)
    phi = (2 * np.pi / P) * np.arange(P)
    cp, sp = R * np.cos(phi), R * np.sin(phi)
    c, s = np.cos(thetas)[..., None], np.sin(thetas)[..., None]
    # rotate the unrotated ring offsets by theta
    nx = cx[..., None] + (c * cp - s * sp)
    ny = cy[..., None] + (s * cp + c * sp)
    bits = bilinear_sample(level, nx, ny) >= center[..., None]
    return bits.astype(np.int64) @ (np.int64(1) << np.arange(P, dtype=np.int64))


def lbp_code(level: np.ndarray, center: tuple[float, float], P: int, R: float, theta: float = 0.0) -> int:
    return int(lbp_codes(as_gray(level), center[0], center[1], theta, P, R))


@lru_cache(maxsize=None)
def dct_matrix(n: int = 4) -> np.ndarray:
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    c[0] /= np.sqrt(2.0)
    c.setflags(write=False)
    return c


def dct_features(patch) -> np.ndarray:
    """Orthonormal 2-D DCT-II of a 4x4 patch (or a stack of them), flattened row-major."""
    patch = np.asarray(patch, dtype=np.float64)
    c = dct_matrix(patch.shape[-1])
    coeffs = c @ patch @ c.T
    return coeffs.reshape(*patch.shape[:-2], -1)


def svd_features(patch) -> np.ndarray:
    """Singular values, non-increasing."""
    return np.linalg.svd(np.asarray(patch, dtype=np.float64), compute_uv=False)


def _histograms(bins: np.ndarray, n_bins: int) -> np.ndarray:
    n = bins.shape[0]
    flat = bins.reshape(n, -1) + (np.arange(n) * n_bins)[:, None]
    return np.bincount(flat.ravel(), minlength=n * n_bins).reshape(n, n_bins).astype(np.float64)


def _normalize(block: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(block, axis=1, keepdims=True)
    return np.divide(block, norms, out=np.zeros_like(block), where=norms > 0)


def describe_level(level: np.ndarray, xs, ys, thetas, cfg: DescriptorConfig | None = None) -> np.ndarray:
    """Descriptor rows (N, cfg.length) for keypoints at ``(xs, ys)`` with orientations ``thetas``."""
    cfg = cfg or DescriptorConfig()
    xs = np.asarray(xs, dtype=np.float64)
    if xs.size == 0:
        return np.zeros((0, cfg.length))
    gx, gy = oriented_grid(xs, ys, thetas)
    patches = bilinear_sample(level, gx, gy)
    t = np.asarray(thetas, dtype=np.float64).reshape(-1, 1, 1)

    codes1 = lbp_codes(level, gx, gy, t, cfg.lbp1_points, cfg.lbp1_radius, patches)
    codes2 = lbp_codes(level, gx, gy, t, cfg.lbp2_points, cfg.lbp2_radius, patches)
    blocks = [
        _histograms(u2_table(cfg.lbp1_points)[codes1], 59),
        _histograms(riu2_table(cfg.lbp2_points)[codes2], cfg.lbp2_points + 2),
        dct_features(patches),
        svd_features(patches),
    ]
    if cfg.normalize_blocks:
        blocks = [_normalize(b) for b in blocks]
    return np.hstack(blocks)


@dataclass
class Descriptor:
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    v4: np.ndarray
    x: float  # original-image coordinates
    y: float
    level: tuple[int, int] | None = None  # (octave, interval)
    theta: float | None = None

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.v1, self.v2, self.v3, self.v4])

    def __len__(self) -> int:
        return self.vector.size

    @classmethod
    def from_vector(cls, vector, x: float, y: float, sizes=(59, 14, 16, 4), level=None, theta=None) -> Descriptor:
        vector = np.asarray(vector, dtype=np.float64)
        cuts = np.cumsum(sizes)[:-1]
        return cls(*np.split(vector, cuts), x=float(x), y=float(y), level=level, theta=theta)


def build_descriptor(level: np.ndarray, kp: Keypoint, cfg: DescriptorConfig | None = None, beta: float = 1.25) -> Descriptor:
    cfg = cfg or DescriptorConfig()
    row = describe_level(as_gray(level), [kp.x], [kp.y], [kp.theta], cfg)[0]
    X, Y = level_to_original(kp.x, kp.y, kp.octave, beta)
    return Descriptor.from_vector(row, X, Y, cfg.block_sizes, level=(kp.octave, kp.interval), theta=kp.theta)


def write_descriptors_csv(path: str | Path, coords: np.ndarray, vectors: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["X", "Y"] + [f"d{i}" for i in range(vectors.shape[1])])
        for (X, Y), row in zip(coords, vectors):
            writer.writerow([repr(float(X)), repr(float(Y))] + [repr(float(v)) for v in row])
