"""Image decoding/encoding, perturbation operators and synthetic copy-move forgeries."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, UnidentifiedImageError

from .image import ImageError, as_gray, bilinear_sample, gaussian_kernel1d, separable_filter

# ITU-R BT.601 luma weights
LUMA = np.array([0.299, 0.587, 0.114])

_READ_FORMATS = {"PNG", "JPEG", "PPM"}  # Pillow decodes PGM through its PPM plugin
_WRITE_SUFFIXES = {".png": "PNG", ".pgm": "PPM"}


def load_image(path: str | Path) -> np.ndarray:
    """Decode a PNG, JPEG or PGM file to a float64 gray image on [0, 255]."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            fmt = im.format
            if fmt not in _READ_FORMATS:
                raise ImageError(f"{path}: unsupported format {fmt}")
            im.load()
            arr = _to_luma(im)
    except FileNotFoundError as exc:
        raise ImageError(f"{path}: no such file") from exc
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageError(f"{path}: cannot decode image ({exc})") from exc
    if arr.size == 0:
        raise ImageError(f"{path}: zero-dimension image")
    return as_gray(arr)


def _to_luma(im: Image.Image) -> np.ndarray:
    mode = im.mode
    if mode in ("L", "1"):
        return np.asarray(im.convert("L"), dtype=np.float64)
    if mode.startswith("I;16") or mode == "I":
        return np.asarray(im, dtype=np.float64) * (255.0 / 65535.0)
    if mode == "F":
        return np.asarray(im, dtype=np.float64)
    if mode == "LA":
        return np.asarray(im.getchannel("L"), dtype=np.float64)
    rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
    return rgb @ LUMA


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def save_image(path: str | Path, img: np.ndarray) -> None:
    path = Path(path)
    fmt = _WRITE_SUFFIXES.get(path.suffix.lower())
    if fmt is None:
        raise ImageError(f"{path}: can only write .png or .pgm")
    Image.fromarray(to_uint8(img), mode="L").save(path, format=fmt)


def save_overlay(path: str | Path, img: np.ndarray, segments, a_color=(255, 40, 40), b_color=(40, 220, 40)) -> None:
    """PNG of ``img`` with a line per ``((ax, ay), (bx, by))`` segment; endpoints
    are marked in distinct colours."""
    rgb = Image.fromarray(to_uint8(img), mode="L").convert("RGB")
    draw = ImageDraw.Draw(rgb)
    for (ax, ay), (bx, by) in segments:
        draw.line([(ax, ay), (bx, by)], fill=(255, 220, 0), width=1)
        draw.ellipse([ax - 2, ay - 2, ax + 2, ay + 2], outline=a_color)
        draw.ellipse([bx - 2, by - 2, bx + 2, by + 2], outline=b_color)
    rgb.save(path, format="PNG")


# ---------------------------------------------------------------- perturbations


@dataclass(frozen=True)
class Blur:
    window: int = 3
    sigma: float = 1.0

    name = "blur"

    @property
    def param(self) -> float:
        return self.sigma


@dataclass(frozen=True)
class Noise:
    mean: float = 0.0
    var: float = 1.0

    name = "noise"

    @property
    def param(self) -> float:
        return self.var


@dataclass(frozen=True)
class Jpeg:
    quality: int = 80

    name = "jpeg"

    @property
    def param(self) -> int:
        return self.quality


Perturbation = Blur | Noise | Jpeg


def parse_perturbation(text: str) -> Perturbation:
    """Parse ``blur:<w>:<sigma>``, ``noise:<mean>:<var>`` or ``jpeg:<quality>``."""
    name, *args = text.strip().split(":")
    try:
        if name == "blur" and len(args) == 2:
            return Blur(int(args[0]), float(args[1]))
        if name == "noise" and len(args) == 2:
            return Noise(float(args[0]), float(args[1]))
        if name == "jpeg" and len(args) == 1:
            return Jpeg(int(args[0]))
    except ValueError:
        pass
    raise ValueError(f"bad perturbation {text!r}; use blur:w:sigma, noise:mean:var or jpeg:q")


def perturb(img: np.ndarray, op: Perturbation, seed: int = 0) -> np.ndarray:
    img = as_gray(img)
    if isinstance(op, Blur):
        if op.window < 1 or op.window % 2 == 0:
            raise ValueError(f"blur window must be odd and positive, got {op.window}")
        if not op.sigma > 0:
            raise ValueError(f"blur sigma must be > 0, got {op.sigma}")
        return separable_filter(img, gaussian_kernel1d(op.sigma, op.window // 2))
    if isinstance(op, Noise):
        if op.var < 0:
            raise ValueError(f"noise variance must be >= 0, got {op.var}")
        if op.var == 0 and op.mean == 0:
            return img.copy()
        rng = np.random.default_rng(seed)
        noisy = img + rng.normal(op.mean, math.sqrt(op.var), size=img.shape)
        return np.clip(noisy, 0.0, 255.0)
    if isinstance(op, Jpeg):
        if not 1 <= op.quality <= 100:
            raise ValueError(f"jpeg quality must lie in [1, 100], got {op.quality}")
        buf = io.BytesIO()
        Image.fromarray(to_uint8(img), mode="L").save(buf, format="JPEG", quality=op.quality)
        buf.seek(0)
        with Image.open(buf) as im:
            return np.asarray(im.convert("L"), dtype=np.float64)
    raise TypeError(f"unknown perturbation {op!r}")


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 255.0) -> float:
    mse = float(np.mean((np.asarray(a, float) - np.asarray(b, float)) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


# ---------------------------------------------------------------- synthetic forgeries


class ForgeryError(ValueError):
    pass


@dataclass(frozen=True)
class ForgeryGroundTruth:
    """Copy-move ground truth: a source rectangle pasted, rotated and scaled about
    its centre, at ``dest_center``.

    ``source_rect`` is ``(x, y, width, height)`` in pixels. Points map from the
    source to the copy by ``b = scale * R(rotation) @ (a - source_center) + dest_center``.
    """

    source_rect: tuple[int, int, int, int]
    dest_center: tuple[float, float]
    rotation: float = 0.0
    scale: float = 1.0

    @property
    def source_center(self) -> tuple[float, float]:
        x, y, w, h = self.source_rect
        return (x + (w - 1) / 2.0, y + (h - 1) / 2.0)

    @property
    def translation(self) -> tuple[float, float]:
        cx, cy = self.source_center
        return (self.dest_center[0] - cx, self.dest_center[1] - cy)

    def linear(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return self.scale * np.array([[c, -s], [s, c]])

    def apply(self, points) -> np.ndarray:
        """Map source-frame points ``(N, 2)`` as ``(x, y)`` to the pasted frame."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return (pts - self.source_center) @ self.linear().T + np.asarray(self.dest_center)

    def pasted_corners(self) -> np.ndarray:
        x, y, w, h = self.source_rect
        corners = [(x, y), (x + w - 1, y), (x + w - 1, y + h - 1), (x, y + h - 1)]
        return self.apply(corners)

    def to_dict(self) -> dict:
        return {
            "source_rect": list(self.source_rect),
            "dest_center": list(self.dest_center),
            "rotation": self.rotation,
            "scale": self.scale,
            "translation": list(self.translation),
        }

    @classmethod
    def from_dict(cls, data: dict) -> ForgeryGroundTruth:
        return cls(
            source_rect=tuple(int(v) for v in data["source_rect"]),
            dest_center=tuple(float(v) for v in data["dest_center"]),
            rotation=float(data.get("rotation", 0.0)),
            scale=float(data.get("scale", 1.0)),
        )

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def synth_forgery(
    img: np.ndarray, spec: ForgeryGroundTruth, seed: int | None = None
) -> tuple[np.ndarray, ForgeryGroundTruth]:
    """Paste a rotated/scaled copy of ``spec.source_rect`` centred on ``spec.dest_center``.

    Pixels of the copy are bilinear samples of the untouched input, so the
    source region is never read after being overwritten. The result is fully
    determined by ``spec``; ``seed`` is accepted for call-site symmetry with
    the other generators and has no effect.
    """
    img = as_gray(img)
    h, w = img.shape
    x0, y0, rw, rh = spec.source_rect
    if rw < 1 or rh < 1 or x0 < 0 or y0 < 0 or x0 + rw > w or y0 + rh > h:
        raise ForgeryError(f"source rect {spec.source_rect} outside {w}x{h} image")
    if not 0.5 <= spec.scale <= 2.0:
        raise ForgeryError(f"scale must lie in [0.5, 2], got {spec.scale}")
    if not 0.0 <= spec.rotation < 2 * math.pi:
        raise ForgeryError(f"rotation must lie in [0, 2pi), got {spec.rotation}")

    corners = spec.pasted_corners()
    lo = np.floor(corners.min(axis=0) - 1e-9).astype(int)
    hi = np.ceil(corners.max(axis=0) + 1e-9).astype(int)
    if lo[0] < 0 or lo[1] < 0 or hi[0] > w - 1 or hi[1] > h - 1:
        raise ForgeryError("pasted region falls outside the image")

    ys, xs = np.mgrid[lo[1] : hi[1] + 1, lo[0] : hi[0] + 1].astype(np.float64)
    inv = np.linalg.inv(spec.linear())
    cx, cy = spec.source_center
    dx = xs - spec.dest_center[0]
    dy = ys - spec.dest_center[1]
    qx = cx + inv[0, 0] * dx + inv[0, 1] * dy
    qy = cy + inv[1, 0] * dx + inv[1, 1] * dy
    # snap lattice hits so pure translations and quarter turns copy pixels exactly
    qx = np.where(np.abs(qx - np.rint(qx)) < 1e-9, np.rint(qx), qx)
    qy = np.where(np.abs(qy - np.rint(qy)) < 1e-9, np.rint(qy), qy)
    inside = (qx >= x0) & (qx <= x0 + rw - 1) & (qy >= y0) & (qy <= y0 + rh - 1)

    out = img.copy()
    rows = ys[inside].astype(int)
    cols = xs[inside].astype(int)
    out[rows, cols] = bilinear_sample(img, qx[inside], qy[inside])
    return out, spec


def textured_image(size: int = 512, seed: int = 0) -> np.ndarray:
    """Seeded synthetic scene: multi-scale smoothed noise plus random flat shapes.

    The noise keeps every neighbourhood distinct, so an untouched image holds
    no copy-move pairs, while the shapes supply clean corners.
    """
    rng = np.random.default_rng(seed)
    h = w = int(size)
    field = np.zeros((h, w))
    for sigma, amp in ((1.0, 0.35), (2.5, 1.0), (6.0, 1.0), (16.0, 0.8)):
        layer = separable_filter(rng.standard_normal((h, w)), gaussian_kernel1d(sigma))
        field += amp * layer / layer.std()

    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(int(0.00015 * h * w)):
        level = rng.uniform(-2.5, 2.5)
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        rx, ry = rng.uniform(4, 24, size=2)
        if rng.random() < 0.5:
            mask = (np.abs(xx - cx) <= rx) & (np.abs(yy - cy) <= ry)
        else:
            mask = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
        field[mask] = 0.5 * field[mask] + level

    lo, hi = np.percentile(field, [0.5, 99.5])
    return np.clip(10.0 + 235.0 * (field - lo) / (hi - lo), 0.0, 255.0)
