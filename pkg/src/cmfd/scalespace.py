"""Gaussian pyramid of octaves (resolution) and intervals (blur)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PyramidConfig
from .image import MIN_SIDE, ImageError, as_gray, bilinear_sample, gaussian_kernel1d, separable_filter


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian, radius ceil(3 sigma), unit-sum kernel, replicated borders."""
    return separable_filter(as_gray(img), gaussian_kernel1d(sigma))


def downsampled_shape(shape: tuple[int, int], beta: float) -> tuple[int, int]:
    h, w = shape
    # round half up, independent of Python's banker's rounding
    return int(math.floor(h / beta + 0.5)), int(math.floor(w / beta + 0.5))


def downsample(img: np.ndarray, beta: float) -> np.ndarray:
    """Bilinear resampling by ``1/beta``; output pixel ``(i, j)`` samples the
    source at ``(i * beta, j * beta)`` so coordinates scale back by ``beta``."""
    if not beta > 1:
        raise ValueError(f"beta must be > 1, got {beta}")
    img = as_gray(img)
    oh, ow = downsampled_shape(img.shape, beta)
    if oh < MIN_SIDE or ow < MIN_SIDE:
        raise ImageError(f"downsampling to {ow}x{oh} drops below {MIN_SIDE}x{MIN_SIDE}")
    ys = np.arange(oh, dtype=np.float64)[:, None] * beta
    xs = np.arange(ow, dtype=np.float64)[None, :] * beta
    return bilinear_sample(img, xs, ys)


def level_to_original(x, y, octave: int, beta: float):
    """Map coordinates on octave ``octave`` (1-based) back to the input image frame."""
    f = beta ** (octave - 1)
    return x * f, y * f


@dataclass
class Pyramid:
    # levels[o][i]: octave o, interval i (both zero-based here)
    levels: list[list[np.ndarray]]
    sigmas: list[float]
    beta: float

    @property
    def octaves(self) -> int:
        return len(self.levels)

    @property
    def intervals(self) -> int:
        return len(self.sigmas)

    def level(self, octave: int, interval: int) -> np.ndarray:
        """Level by the 1-based octave/interval tags carried on keypoints."""
        return self.levels[octave - 1][interval - 1]

    def shapes(self) -> list[tuple[int, int]]:
        return [octave[0].shape for octave in self.levels]

    def dump(self, directory: str | Path) -> list[Path]:
        from .imgio import save_image

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        for o, octave in enumerate(self.levels, start=1):
            for i, level in enumerate(octave, start=1):
                path = directory / f"octave{o}_interval{i}.pgm"
                save_image(path, level)
                written.append(path)
        return written


def build_pyramid(img: np.ndarray, cfg: PyramidConfig | None = None) -> Pyramid:
    cfg = cfg or PyramidConfig()
    img = as_gray(img, MIN_SIDE)
    shape = img.shape
    for _ in range(cfg.octaves - 1):
        shape = downsampled_shape(shape, cfg.beta)
        if min(shape) < MIN_SIDE:
            raise ImageError(
                f"{img.shape[1]}x{img.shape[0]} image too small for {cfg.octaves} octaves at beta={cfg.beta}"
            )

    sigmas = cfg.sigmas()
    levels = []
    seed = img
    for o in range(cfg.octaves):
        if o > 0:
            seed = downsample(levels[o - 1][0], cfg.beta)
        levels.append([gaussian_blur(seed, s) for s in sigmas])
    return Pyramid(levels=levels, sigmas=sigmas, beta=cfg.beta)
