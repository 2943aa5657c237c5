import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from srdetect.signals import Signal2D, gen_1d, gen_2d_sincos
from srdetect.wavelet import (
    FilterName,
    WaveletFilter,
    check_filter,
    dwt_1d,
    dwt_2d,
    filter_coeffs,
    idwt_1d,
    idwt_2d,
    quadrature_mirror,
    scaling_growth,
)

FILTERS = [f.value for f in FilterName]
R2 = math.sqrt(2)


def test_haar_taps():
    assert np.allclose(filter_coeffs("haar").lowpass, [1 / R2, 1 / R2], atol=0)


def test_daub4_satisfies_defining_system():
    h = filter_coeffs("daub4").lowpass
    k = np.arange(4)
    alt = (-1.0) ** k
    equations = [h.sum() - R2, h @ h - 1, h[0] * h[2] + h[1] * h[3], alt @ h, alt @ (k * h)]
    assert np.max(np.abs(equations)) < 1e-14
    s3 = math.sqrt(3)
    assert np.allclose(h, np.array([1 + s3, 3 + s3, 3 - s3, 1 - s3]) / (4 * R2), atol=1e-15)


def test_symmlet8_properties():
    f = filter_coeffs("symmlet8")
    h, g = f.lowpass, f.highpass
    assert h.size == 16
    assert abs(h.sum() - R2) < 1e-10
    for m in range(8):
        assert abs(h[: 16 - 2 * m] @ h[2 * m :] - (m == 0)) < 1e-10
    k = np.arange(16, dtype=float)
    # raw moments on a rescaled abscissa stay well conditioned
    for p in range(8):
        assert abs(np.sum((k / 15) ** p * g)) < 1e-10


def test_highpass_is_mirror():
    for name in FILTERS:
        f = filter_coeffs(name)
        L = f.length
        assert np.array_equal(f.highpass, [(-1) ** k * f.lowpass[L - 1 - k] for k in range(L)])


def test_check_filter_rejects_corrupt_taps():
    good = filter_coeffs("daub4")
    bad = good.lowpass.copy()
    bad[1] += 1e-6
    with pytest.raises(ValueError):
        check_filter(WaveletFilter(good.name, bad, quadrature_mirror(bad)))
    with pytest.raises(ValueError, match="unknown wavelet filter"):
        filter_coeffs("coif2")


def test_haar_small_examples():
    c = dwt_1d([1.0, 1.0, 1.0, 1.0], "haar", 1)
    assert np.allclose(c.data, [R2, R2, 0, 0], atol=1e-12)
    c = dwt_1d(np.ones(8), "haar", 2)
    assert np.allclose(c.data, [2, 2, 0, 0, 0, 0, 0, 0], atol=1e-12)
    assert np.allclose(idwt_1d(c), np.ones(8), atol=1e-12)


def test_two_level_constant_of_length_four():
    # levels must leave at least two scaling coefficients, so n=4 allows one level;
    # the n=4 / c=[2] example is checked through the 8-point transform above
    with pytest.raises(ValueError):
        dwt_1d([1.0, 1.0, 1.0, 1.0], "haar", 2)


def haar_matrix_8():
    """Explicit orthogonal matrix of a full 2-level Haar transform on 8 points,
    rows ordered c(2), d_coarse(2), d_fine(4)."""
    s = 1 / R2
    fine_c = np.zeros((4, 8))
    fine_d = np.zeros((4, 8))
    for k in range(4):
        fine_c[k, 2 * k : 2 * k + 2] = [s, s]
        fine_d[k, 2 * k : 2 * k + 2] = [s, -s]
    coarse = np.zeros((2, 4))
    coarse_d = np.zeros((2, 4))
    for k in range(2):
        coarse[k, 2 * k : 2 * k + 2] = [s, s]
        coarse_d[k, 2 * k : 2 * k + 2] = [s, -s]
    return np.vstack([coarse @ fine_c, coarse_d @ fine_c, fine_d])


def test_haar_matches_explicit_matrix():
    W = haar_matrix_8()
    assert np.allclose(W @ W.T, np.eye(8), atol=1e-15)
    x = np.random.default_rng(3).standard_normal(8)
    assert np.max(np.abs(dwt_1d(x, "haar", 2).data - W @ x)) < 1e-12
    one = dwt_1d(x, "haar", 1).data
    # the finest detail band does not depend on the depth of the cascade
    assert np.max(np.abs(one[4:] - W[4:] @ x)) < 1e-12


@pytest.mark.parametrize("name", FILTERS)
@pytest.mark.parametrize("n", [64, 256, 1024, 4096])
def test_reconstruction_and_parseval_1d(name, n):
    x = np.random.default_rng(n).standard_normal(n)
    for levels in (1, 3, int(math.log2(n)) - 1):
        c = dwt_1d(x, name, levels)
        assert np.max(np.abs(idwt_1d(c) - x)) < 1e-10
        assert abs(np.sum(c.data**2) - np.sum(x**2)) < 1e-10 * np.sum(x**2)


@pytest.mark.parametrize("name", FILTERS)
def test_reconstruction_and_parseval_2d(name):
    img = np.random.default_rng(9).standard_normal((256, 256))
    c = dwt_2d(Signal2D(img), name, 4)
    assert np.max(np.abs(idwt_2d(c).values - img)) < 1e-10
    assert abs(np.sum(c.data**2) - np.sum(img**2)) < 1e-10 * np.sum(img**2)


def test_sincos_roundtrip():
    img = gen_2d_sincos(128)
    c = dwt_2d(img, "symmlet8", 3)
    assert np.max(np.abs(idwt_2d(c).values - img.values)) < 1e-10
    assert np.linalg.norm(c.data) == pytest.approx(np.linalg.norm(img.values), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(
    st.sampled_from(FILTERS),
    st.integers(3, 9).flatmap(lambda J: arrays(np.float64, 2**J, elements=st.floats(-1e3, 1e3))),
    st.data(),
)
def test_reconstruction_property(name, x, data):
    J = int(math.log2(x.size))
    levels = data.draw(st.integers(1, J - 1))
    c = dwt_1d(x, name, levels)
    scale = max(1.0, np.max(np.abs(x)))
    assert np.max(np.abs(idwt_1d(c) - x)) < 1e-10 * scale


def test_linearity_of_inverse():
    rng = np.random.default_rng(4)
    u, v = rng.standard_normal(256), rng.standard_normal(256)
    cu = dwt_1d(u, "symmlet8", 3)
    cv = dwt_1d(v, "symmlet8", 3)
    combo = idwt_1d(cu.with_data(2.5 * cu.data - 0.5 * cv.data))
    assert np.max(np.abs(combo - (2.5 * idwt_1d(cu) - 0.5 * idwt_1d(cv)))) < 1e-10


def test_batch_transform_matches_rows():
    x = np.random.default_rng(6).standard_normal((3, 128))
    batch = dwt_1d(x, "daub4", 3)
    for i in range(3):
        assert np.allclose(batch.data[i], dwt_1d(x[i], "daub4", 3).data, atol=1e-14)
    assert np.allclose(idwt_1d(batch), x, atol=1e-12)


def test_haar_half_period_shift():
    x = np.random.default_rng(8).standard_normal(64)
    c0 = dwt_1d(x, "haar", 1).data
    c1 = dwt_1d(np.roll(x, 32), "haar", 1).data
    assert np.allclose(c1[:32], np.roll(c0[:32], 16), atol=1e-14)
    assert np.allclose(c1[32:], np.roll(c0[32:], 16), atol=1e-14)


def test_constant_image_haar_one_level():
    c = dwt_2d(Signal2D(np.full((8, 8), 1.5)), "haar", 1)
    assert np.allclose(c.data[:4, :4], 3.0, atol=1e-12)
    mask = np.ones((8, 8), bool)
    mask[:4, :4] = False
    assert np.allclose(c.data[mask], 0.0, atol=1e-12)
    assert np.allclose(idwt_2d(c).values, 1.5, atol=1e-12)


def test_level_slices_and_scaling_block():
    c = dwt_1d(np.arange(64.0), "haar", 3)
    names = [n for n, _ in c.level_slices()]
    assert names == ["c", "d0", "d1", "d2"]
    sizes = [s.stop - s.start for _, s in c.level_slices()]
    assert sizes == [8, 8, 16, 32]
    assert c.scaling.shape == (8,)
    assert dwt_2d(Signal2D(np.ones((16, 16))), "haar", 2).scaling.shape == (4, 4)


@pytest.mark.parametrize("n, levels", [(64, 0), (64, 6), (100, 1)])
def test_invalid_levels_or_length(n, levels):
    with pytest.raises(ValueError):
        dwt_1d(np.zeros(n), "haar", levels)


def test_2d_needs_square_dyadic():
    with pytest.raises(ValueError):
        dwt_2d(Signal2D(np.zeros((8, 16))), "haar", 1)


def test_scaling_growth_constant_haar_exact():
    rms = scaling_growth(np.ones(1024), "haar", 9)
    expected = np.array([2 ** ((j + 1) / 2) for j in range(9)])
    assert np.max(np.abs(rms - expected)) < 1e-12


def test_scaling_growth_sine_and_zero():
    rms = scaling_growth(gen_1d("sine", 1024), "symmlet8", 4)
    ratios = rms[1:] / rms[:-1]
    assert np.all((ratios[:2] >= 1.2) & (ratios[:2] <= 1.5))
    assert np.all(scaling_growth(np.zeros(64), "daub4", 3) == 0)


def test_haar_alternating_signal():
    c = dwt_1d([1.0, -1.0, 1.0, -1.0], "haar", 1)
    assert np.allclose(c.data, [0, 0, R2, R2], atol=1e-12)
    with pytest.raises(ValueError):
        dwt_1d([1.0, -1.0], "haar", 1)
