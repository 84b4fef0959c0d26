import numpy as np
import pytest
from scipy import ndimage

from cmfd.image import ImageError, as_gray, bilinear_sample, gaussian_kernel1d, separable_filter


def test_as_gray_rejects_bad_input():
    with pytest.raises(ImageError):
        as_gray(np.zeros((4, 4, 3)))
    with pytest.raises(ImageError):
        as_gray(np.array([[0.0, np.nan]]))
    with pytest.raises(ImageError):
        as_gray(np.zeros((8, 20)), min_side=16)
    assert as_gray([[1, 2], [3, 4]]).dtype == np.float64


def test_kernel_unit_sum_and_radius():
    k = gaussian_kernel1d(1.5)
    assert k.size == 2 * 5 + 1
    assert k.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(k, k[::-1])
    with pytest.raises(ValueError):
        gaussian_kernel1d(0.0)


def test_bilinear_matches_scipy_order1(rng):
    img = rng.uniform(0, 255, (40, 57))
    xs = rng.uniform(0, 56, 500)
    ys = rng.uniform(0, 39, 500)
    ref = ndimage.map_coordinates(img, [ys, xs], order=1)
    np.testing.assert_allclose(bilinear_sample(img, xs, ys), ref, atol=1e-10)


def test_bilinear_lattice_is_exact_and_clamped(rng):
    img = rng.uniform(0, 255, (10, 12))
    ys, xs = np.mgrid[0:10, 0:12].astype(float)
    assert np.array_equal(bilinear_sample(img, xs + 1e-12, ys - 1e-12), img)
    assert bilinear_sample(img, -5.0, -3.0) == img[0, 0]
    assert bilinear_sample(img, 40.0, 2.0) == img[2, -1]


def test_separable_filter_replicates_edges():
    img = np.full((9, 9), 42.0)
    assert np.array_equal(separable_filter(img, gaussian_kernel1d(2.0)), img)
