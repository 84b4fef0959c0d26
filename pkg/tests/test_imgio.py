import math

import numpy as np
import pytest
from PIL import Image
from scipy import ndimage

from cmfd.image import ImageError
from cmfd.imgio import (
    Blur,
    ForgeryError,
    ForgeryGroundTruth,
    Jpeg,
    Noise,
    load_image,
    parse_perturbation,
    perturb,
    psnr,
    save_image,
    synth_forgery,
    textured_image,
)


def test_load_constant_pgm(tmp_path):
    p = tmp_path / "c.pgm"
    Image.fromarray(np.full((20, 30), 128, np.uint8), mode="L").save(p)
    img = load_image(p)
    assert img.shape == (20, 30) and img.dtype == np.float64
    assert np.all(img == 128.0)


@pytest.mark.parametrize("rgb,expected", [((255, 255, 255), 255.0), ((255, 0, 0), 76.245), ((0, 0, 255), 29.07)])
def test_rgb_luma(tmp_path, rgb, expected):
    p = tmp_path / "c.png"
    Image.fromarray(np.tile(np.array(rgb, np.uint8), (4, 4, 1)), mode="RGB").save(p)
    assert load_image(p)[0, 0] == pytest.approx(expected, abs=1e-9)


def test_sixteen_bit_scaled(tmp_path):
    p = tmp_path / "d.png"
    Image.fromarray(np.full((5, 5), 65535, np.uint16)).save(p)
    assert load_image(p)[0, 0] == pytest.approx(255.0)


def test_load_errors(tmp_path):
    with pytest.raises(ImageError):
        load_image(tmp_path / "missing.png")
    bad = tmp_path / "junk.png"
    bad.write_bytes(b"not an image")
    with pytest.raises(ImageError):
        load_image(bad)
    gif = tmp_path / "x.gif"
    Image.new("L", (4, 4)).save(gif)
    with pytest.raises(ImageError):
        load_image(gif)


@pytest.mark.parametrize("suffix", [".png", ".pgm"])
def test_save_round_trip(tmp_path, suffix, rng):
    img = rng.integers(0, 256, (17, 23)).astype(float)
    save_image(tmp_path / f"x{suffix}", img)
    assert np.array_equal(load_image(tmp_path / f"x{suffix}"), img)
    with pytest.raises(ImageError):
        save_image(tmp_path / "x.bmp", img)


def test_parse_perturbation():
    assert parse_perturbation("blur:3:1.0") == Blur(3, 1.0)
    assert parse_perturbation("noise:0:3") == Noise(0.0, 3.0)
    assert parse_perturbation("jpeg:60") == Jpeg(60)
    for bad in ("blur:3", "jpeg:x", "sharpen:1"):
        with pytest.raises(ValueError):
            parse_perturbation(bad)


def test_zero_noise_is_identity(texture):
    assert np.array_equal(perturb(texture, Noise(0.0, 0.0), seed=3), texture)


def test_blur_constant_identity():
    img = np.full((32, 32), 91.0)
    assert np.array_equal(perturb(img, Blur(3, 0.5)), img)


def test_blur_keeps_global_mean(texture):
    for sigma in (0.5, 1.0, 2.0):
        assert abs(perturb(texture, Blur(3, sigma)).mean() - texture.mean()) < 0.5


def test_jpeg80_psnr_oracle(texture):
    out = perturb(texture, Jpeg(80))
    # direct PSNR, independent of the helper
    mse = np.sum((out - texture) ** 2) / texture.size
    direct = 10 * math.log10(255.0**2 / mse)
    assert direct > 30.0
    assert psnr(out, texture) == pytest.approx(direct, rel=1e-12)


def test_noise_seeded_and_clamped(texture):
    a = perturb(texture, Noise(0.0, 5.0), seed=11)
    assert np.array_equal(a, perturb(texture, Noise(0.0, 5.0), seed=11))
    assert not np.array_equal(a, perturb(texture, Noise(0.0, 5.0), seed=12))
    assert a.min() >= 0 and a.max() <= 255
    assert np.std(a - texture) == pytest.approx(math.sqrt(5.0), rel=0.1)


@pytest.mark.parametrize("op", [Blur(4, 1.0), Blur(3, 0.0), Noise(0, -1), Jpeg(0), Jpeg(101)])
def test_perturb_rejects(op, texture):
    with pytest.raises(ValueError):
        perturb(texture, op)


def test_translation_copy_exact(texture):
    gt = ForgeryGroundTruth((40, 60, 32, 32), (40 + 15.5 + 50, 60 + 15.5))
    out, back = synth_forgery(texture, gt)
    assert back.translation == (50.0, 0.0)
    assert np.array_equal(out[60:92, 90:122], texture[60:92, 40:72])
    # pixels outside the pasted block are untouched
    mask = np.ones_like(out, bool)
    mask[60:92, 90:122] = False
    assert np.array_equal(out[mask], texture[mask])


def test_half_turn_is_lattice_rotation(texture):
    gt = ForgeryGroundTruth((30, 30, 40, 40), (150 + 19.5, 120 + 19.5), rotation=math.pi)
    out, _ = synth_forgery(texture, gt)
    assert np.array_equal(out[120:160, 150:190], texture[30:70, 30:70][::-1, ::-1])


def test_quarter_turn_is_lattice_rotation(texture):
    gt = ForgeryGroundTruth((30, 30, 40, 40), (150 + 19.5, 120 + 19.5), rotation=math.pi / 2)
    out, _ = synth_forgery(texture, gt)
    # b = R a with y down: source column x goes to destination row
    assert np.array_equal(out[120:160, 150:190], np.rot90(texture[30:70, 30:70], k=-1))


def test_oblique_rotation_matches_independent_resampler(texture):
    gt = ForgeryGroundTruth((60, 70, 48, 48), (180.0, 150.0), rotation=math.pi / 6, scale=1.1)
    out, _ = synth_forgery(texture, gt)
    # independent oracle: invert the map per destination pixel, interpolate with scipy
    cx, cy = 60 + 23.5, 70 + 23.5
    c, s = math.cos(math.pi / 6), math.sin(math.pi / 6)
    ys, xs = np.mgrid[0:256, 0:256].astype(float)
    dx, dy = (xs - 180.0) / 1.1, (ys - 150.0) / 1.1
    qx = cx + c * dx + s * dy
    qy = cy - s * dx + c * dy
    inside = (qx >= 60) & (qx <= 107) & (qy >= 70) & (qy <= 117)
    ref = texture.copy()
    ref[inside] = ndimage.map_coordinates(texture, [qy[inside], qx[inside]], order=1)
    assert np.abs(out - ref).max() < 1e-6
    assert inside.sum() > 2000


def test_forgery_bounds(texture):
    with pytest.raises(ForgeryError):
        synth_forgery(texture, ForgeryGroundTruth((230, 10, 40, 40), (100.0, 100.0)))
    with pytest.raises(ForgeryError):
        synth_forgery(texture, ForgeryGroundTruth((10, 10, 40, 40), (240.0, 100.0)))
    with pytest.raises(ForgeryError):
        synth_forgery(texture, ForgeryGroundTruth((10, 10, 40, 40), (120.0, 100.0), scale=3.0))


def test_ground_truth_json(tmp_path):
    gt = ForgeryGroundTruth((1, 2, 64, 64), (200.5, 100.5), rotation=math.pi / 6, scale=0.9)
    gt.dump(tmp_path / "gt.json")
    import json

    data = json.loads((tmp_path / "gt.json").read_text())
    assert ForgeryGroundTruth.from_dict(data) == gt
    assert data["translation"] == [200.5 - 32.5, 100.5 - 33.5]
    np.testing.assert_allclose(gt.apply([gt.source_center]), [gt.dest_center])


def test_textured_image_seeded():
    a = textured_image(64, seed=1)
    assert np.array_equal(a, textured_image(64, seed=1))
    assert not np.array_equal(a, textured_image(64, seed=2))
    assert a.min() >= 0 and a.max() <= 255
