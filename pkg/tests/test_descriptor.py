import math

import numpy as np
import pytest

from cmfd.config import DescriptorConfig
from cmfd.descriptor import (
    Descriptor,
    build_descriptor,
    dct_features,
    describe_level,
    lbp_code,
    riu2_bin,
    svd_features,
    transitions,
    u2_bin,
    u2_table,
    write_descriptors_csv,
)
from cmfd.harris import Keypoint
from cmfd.scalespace import gaussian_blur


def naive_lbp(img, cx, cy, P, R):
    """Per-neighbour loop with its own bilinear interpolation (theta = 0)."""

    def interp(x, y):
        x0, y0 = math.floor(x), math.floor(y)
        fx, fy = x - x0, y - y0
        v = 0.0
        for dy, wy in ((0, 1 - fy), (1, fy)):
            for dx, wx in ((0, 1 - fx), (1, fx)):
                if wx * wy:
                    v += wx * wy * img[y0 + dy, x0 + dx]
        return v

    code = 0
    for p in range(P):
        nx = cx + round(R * math.cos(2 * math.pi * p / P), 12)
        ny = cy + round(R * math.sin(2 * math.pi * p / P), 12)
        if interp(nx, ny) >= img[cy, cx]:
            code |= 1 << p
    return code


def test_lbp_constant_and_peak():
    assert lbp_code(np.full((9, 9), 5.0), (4.0, 4.0), 8, 1.0) == 255
    assert lbp_code(np.full((9, 9), 5.0), (4.0, 4.0), 12, 2.0, theta=0.7) == 4095
    img = np.zeros((9, 9))
    img[4, 4] = 10.0
    assert lbp_code(img, (4.0, 4.0), 8, 1.0) == 0


def test_lbp_matches_naive_oracle(rng):
    for _ in range(5):
        img = rng.uniform(0, 255, (8, 8))
        for cy in range(1, 7):
            for cx in range(1, 7):
                assert lbp_code(img, (float(cx), float(cy)), 8, 1.0) == naive_lbp(img, cx, cy, 8, 1.0)


def test_lbp_bit_order():
    img = np.zeros((5, 5))
    img[2, 3] = 1.0  # neighbour p = 0 sits at +x
    img[2, 2] = 0.5
    assert lbp_code(img, (2.0, 2.0), 8, 1.0) == 1
    img[3, 2] = 1.0  # p = 2 sits at +y (rows grow downwards)
    assert lbp_code(img, (2.0, 2.0), 8, 1.0) == 0b101


def test_u2_enumeration():
    uniform = [c for c in range(256) if transitions(c, 8) <= 2]
    assert len(uniform) == 58
    assert [u2_bin(c) for c in uniform] == list(range(58))
    assert u2_bin(0) == 0 and u2_bin(255) == 57
    assert u2_bin(0b01010101) == 58
    assert set(u2_table(8).tolist()) == set(range(59))


def test_riu2_values():
    assert riu2_bin(0, 12) == 0
    assert riu2_bin(4095, 12) == 12
    assert riu2_bin(0b000000111000, 12) == 3
    assert riu2_bin(0b010101010101, 12) == 13


def test_riu2_rotation_invariance_exhaustive():
    P = 12
    mask = (1 << P) - 1
    for code in range(1 << P):
        b = riu2_bin(code, P)
        for r in range(1, P):
            rot = ((code << r) | (code >> (P - r))) & mask
            assert riu2_bin(rot, P) == b


def dct_oracle(x):
    n = 4
    out = np.zeros((n, n))
    for u in range(n):
        for v in range(n):
            au = math.sqrt(1 / n) if u == 0 else math.sqrt(2 / n)
            av = math.sqrt(1 / n) if v == 0 else math.sqrt(2 / n)
            s = 0.0
            for i in range(n):
                for j in range(n):
                    s += x[i, j] * math.cos(math.pi * (2 * i + 1) * u / (2 * n)) * math.cos(math.pi * (2 * j + 1) * v / (2 * n))
            out[u, v] = au * av * s
    return out.reshape(-1)


def test_dct(rng):
    c = dct_features(np.full((4, 4), 7.0))
    assert c[0] == pytest.approx(28.0, abs=1e-12) and np.abs(c[1:]).max() < 1e-12
    x = rng.uniform(0, 255, (4, 4))
    assert np.abs(dct_features(x) - dct_oracle(x)).max() < 1e-12
    assert np.linalg.norm(dct_features(x)) == pytest.approx(np.linalg.norm(x), rel=1e-12)


def test_svd(rng):
    np.testing.assert_allclose(svd_features(np.eye(4)), np.ones(4))
    np.testing.assert_allclose(svd_features(np.full((4, 4), 3.0)), [12, 0, 0, 0], atol=1e-12)
    x = rng.uniform(0, 255, (4, 4))
    s = svd_features(x)
    assert np.sum(s**2) == pytest.approx(np.sum(x**2), rel=1e-9)
    eig = np.sqrt(np.clip(np.linalg.eigvalsh(x.T @ x), 0, None))[::-1]
    assert np.abs(s - eig).max() < 1e-9 * s[0]


def _describe(img, pts, thetas, cfg=None):
    xs, ys = np.array(pts, float).T
    return describe_level(img, xs, ys, thetas, cfg)


def test_descriptor_contract(texture):
    rows = _describe(texture, [(40, 50), (100.5, 80.25), (200, 30)], [0.0, 1.0, 4.0])
    assert rows.shape == (3, 93)
    for row in rows:
        d = Descriptor.from_vector(row, 0, 0)
        assert len(d) == 93
        for block in (d.v1, d.v2, d.v3, d.v4):
            assert np.linalg.norm(block) == pytest.approx(1.0, abs=1e-12)
        assert np.all(d.v4 >= 0) and np.all(np.diff(d.v4) <= 0)


def test_histogram_mass_unnormalized(texture):
    rows = _describe(texture, [(60, 60), (61, 90)], [0.3, 2.0], DescriptorConfig(normalize_blocks=False))
    assert np.all(rows[:, :59].sum(1) == 16) and np.all(rows[:, 59:73].sum(1) == 16)


def test_identical_neighbourhoods_identical_descriptors(texture):
    img = texture.copy()
    img[100:130, 150:180] = img[20:50, 30:60]
    a, b = _describe(img, [(45, 35), (165, 115)], [0.0, 0.0])
    assert np.array_equal(a, b)
    # oblique grids land on fractional offsets that round differently at
    # different absolute positions
    a, b = _describe(img, [(45, 35), (165, 115)], [1.1, 1.1])
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_quarter_turned_copy(texture):
    img = gaussian_blur(texture, 1.0)
    w = img.shape[1]
    rot = np.rot90(img)  # (x, y) -> (y, w - 1 - x); directions turn by -pi/2
    x, y, theta = 70.0, 90.0, 0.8
    a = _describe(img, [(x, y)], [theta])[0]
    b = _describe(rot, [(y, w - 1 - x)], [theta - math.pi / 2])[0]
    assert np.abs(a[59:73] - b[59:73]).max() < 1e-6
    assert abs(a[73] - b[73]) < 1e-6
    assert np.abs(a[89:] - b[89:]).max() < 1e-6


def test_lbp_blocks_invariant_to_offset(texture):
    pts, th = [(40, 40), (120, 77)], [0.0, 2.5]
    a = _describe(texture, pts, th)
    b = _describe(texture + 17.0, pts, th)
    assert np.array_equal(a[:, :73], b[:, :73])


def test_svd_block_intensity_scaling(texture):
    pts, th = [(40, 40), (120, 77)], [0.5, 2.5]
    raw = DescriptorConfig(normalize_blocks=False)
    np.testing.assert_allclose(_describe(3 * texture, pts, th, raw)[:, 89:], 3 * _describe(texture, pts, th, raw)[:, 89:], rtol=1e-12)
    np.testing.assert_allclose(_describe(3 * texture, pts, th)[:, 89:], _describe(texture, pts, th)[:, 89:], rtol=1e-12)


def test_p16_length(texture):
    assert _describe(texture, [(50, 50)], [0.0], DescriptorConfig(lbp2_points=16)).shape == (1, 97)


def test_build_descriptor_maps_coordinates(texture):
    d = build_descriptor(texture, Keypoint(40.0, 24.0, 3, 2, 1.0, theta=0.3))
    assert (d.x, d.y) == (62.5, 37.5)
    assert d.level == (3, 2) and d.theta == 0.3
    np.testing.assert_array_equal(d.vector, _describe(texture, [(40, 24)], [0.3])[0])


def test_zero_block_stays_zero():
    rows = _describe(np.zeros((30, 30)), [(15, 15)], [0.0])
    assert np.all(rows[0, 73:] == 0)


def test_csv(tmp_path, texture):
    rows = _describe(texture, [(40, 50)], [0.0])
    write_descriptors_csv(tmp_path / "d.csv", np.array([[40.0, 50.0]]), rows)
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0].split(",")[:3] == ["X", "Y", "d0"] and len(lines[1].split(",")) == 95
