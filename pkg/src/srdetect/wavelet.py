"""Periodic orthogonal discrete wavelet transform, 1D and separable 2D.

Coefficients are packed coarse-to-fine into one array:
``(c_J0, d_J0, d_J0+1, ..., d_J-1)`` in 1D, and the usual Mallat layout
(LL block in the top-left corner) in 2D.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np


class FilterName(str, enum.Enum):
    HAAR = "haar"
    DAUB4 = "daub4"
    SYMMLET8 = "symmlet8"


_S3 = math.sqrt(3.0)

_LOWPASS = {
    FilterName.HAAR: [1 / math.sqrt(2), 1 / math.sqrt(2)],
    FilterName.DAUB4: [(1 + _S3) / (4 * math.sqrt(2)), (3 + _S3) / (4 * math.sqrt(2)),
                       (3 - _S3) / (4 * math.sqrt(2)), (1 - _S3) / (4 * math.sqrt(2))],
    # least-asymmetric Daubechies filter with 8 vanishing moments (16 taps)
    FilterName.SYMMLET8: [
        0.0018899503327594609, -0.0003029205147213668, -0.01495225833704823,
        0.003808752013890615, 0.049137179673607506, -0.027219029917056003,
        -0.05194583810770904, 0.3644418948353314, 0.7771857517005235,
        0.4813596512583722, -0.061273359067658524, -0.1432942383508097,
        0.007607487324917605, 0.03169508781149298, -0.0005421323317911481,
        -0.0033824159510061256,
    ],
}

_VANISHING_MOMENTS = {FilterName.HAAR: 1, FilterName.DAUB4: 2, FilterName.SYMMLET8: 8}


@dataclass(frozen=True)
class WaveletFilter:
    name: FilterName
    lowpass: np.ndarray
    highpass: np.ndarray

    @property
    def length(self) -> int:
        return self.lowpass.size

    @property
    def vanishing_moments(self) -> int:
        return _VANISHING_MOMENTS[self.name]


def quadrature_mirror(lowpass) -> np.ndarray:
    """g_k = (-1)^k h_{L-1-k}."""
    h = np.asarray(lowpass, dtype=float)
    signs = np.where(np.arange(h.size) % 2 == 0, 1.0, -1.0)
    return signs * h[::-1]


def check_filter(filt: WaveletFilter, tol: float = 1e-12) -> None:
    """Raise if the taps violate sum = sqrt(2), double-shift orthonormality,
    the mirror relation, or the vanishing-moment count."""
    h, g = filt.lowpass, filt.highpass
    L = h.size
    if L % 2:
        raise ValueError(f"{filt.name.value}: filter length must be even")
    if abs(h.sum() - math.sqrt(2)) > tol:
        raise ValueError(f"{filt.name.value}: lowpass taps do not sum to sqrt(2)")
    for m in range(L // 2):
        dot = np.dot(h[: L - 2 * m], h[2 * m :])
        if abs(dot - (1.0 if m == 0 else 0.0)) > tol:
            raise ValueError(f"{filt.name.value}: taps not orthonormal under shift {2 * m}")
    if not np.array_equal(g, quadrature_mirror(h)):
        raise ValueError(f"{filt.name.value}: highpass is not the quadrature mirror")
    # centred abscissae keep high-order moments well conditioned
    k = np.arange(L) - (L - 1) / 2
    for p in range(filt.vanishing_moments):
        scale = np.sum(np.abs(k) ** p * np.abs(g))
        if abs(np.sum(k**p * g)) > 1e-10 * max(scale, 1.0):
            raise ValueError(f"{filt.name.value}: highpass moment {p} does not vanish")


@functools.lru_cache(maxsize=None)
def filter_coeffs(name) -> WaveletFilter:
    try:
        name = FilterName(str(getattr(name, "value", name)).lower())
    except ValueError:
        raise ValueError(f"unknown wavelet filter {name!r}; expected haar, daub4 or symmlet8") from None
    h = np.array(_LOWPASS[name])
    g = quadrature_mirror(h)
    h.setflags(write=False)
    g.setflags(write=False)
    filt = WaveletFilter(name, h, g)
    check_filter(filt)
    return filt


for _name in FilterName:
    filter_coeffs(_name)


@dataclass(frozen=True)
class WaveletCoeffs:
    """Packed transform output.

    ``data`` is 1D of length ``n`` or 2D of shape ``(n, n)``; leading
    batch axes are allowed for 1D transforms.
    """

    data: np.ndarray
    n: int
    levels: int
    filter: WaveletFilter
    dims: int = 1

    @property
    def coarse_size(self) -> int:
        return self.n >> self.levels

    def level_slices(self) -> list[tuple[str, slice]]:
        """Index map of the 1D packing: ``[("c", ...), ("d0", ...), ...]``
        where ``d0`` is the coarsest detail band."""
        size = self.coarse_size
        out = [("c", slice(0, size))]
        for j in range(self.levels):
            out.append((f"d{j}", slice(size, 2 * size)))
            size *= 2
        return out

    @property
    def scaling(self) -> np.ndarray:
        s = self.coarse_size
        return self.data[..., :s] if self.dims == 1 else self.data[:s, :s]

    def with_data(self, data) -> "WaveletCoeffs":
        return WaveletCoeffs(np.asarray(data, dtype=float), self.n, self.levels, self.filter, self.dims)


def _check_levels(n: int, levels: int) -> None:
    if n < 2 or n & (n - 1):
        raise ValueError(f"length must be a power of two, got {n}")
    J = n.bit_length() - 1
    if not 1 <= levels <= J - 1:
        raise ValueError(f"levels must be between 1 and {J - 1} for length {n}, got {levels}")


@functools.lru_cache(maxsize=None)
def _gather_index(n: int, L: int) -> np.ndarray:
    k = np.arange(n // 2)[:, None]
    m = np.arange(L)[None, :]
    idx = (2 * k + m) % n
    idx.setflags(write=False)
    return idx


@functools.lru_cache(maxsize=None)
def _periodized(name: FilterName, n: int):
    """Taps folded modulo n, so filters longer than the signal wrap correctly."""
    filt = filter_coeffs(name)
    if filt.length <= n:
        return filt.lowpass, filt.highpass
    h = np.zeros(n)
    g = np.zeros(n)
    np.add.at(h, np.arange(filt.length) % n, filt.lowpass)
    np.add.at(g, np.arange(filt.length) % n, filt.highpass)
    return h, g


def analysis_step(x: np.ndarray, filt: WaveletFilter, axis: int = -1):
    """One periodic filter-and-decimate step along ``axis``: returns (c, d)."""
    x = np.moveaxis(np.asarray(x, dtype=float), axis, -1)
    n = x.shape[-1]
    h, g = _periodized(filt.name, n)
    windows = x[..., _gather_index(n, h.size)]
    c = windows @ h
    d = windows @ g
    return np.moveaxis(c, -1, axis), np.moveaxis(d, -1, axis)


@functools.lru_cache(maxsize=None)
def _synthesis_spectra(name: FilterName, n: int):
    """Spectra of the even/odd tap phases, folded onto the half-length circle.

    Tap m sends input k to output (2k + m) mod n, i.e. to phase m % 2 shifted
    circularly by m // 2, so each phase is a circular convolution.
    """
    half = n // 2
    h, g = _periodized(name, n)
    spectra = []
    for taps in (h[0::2], h[1::2], g[0::2], g[1::2]):
        folded = np.zeros(half)
        np.add.at(folded, np.arange(taps.size) % half, taps)
        spectra.append(np.fft.rfft(folded))
    return tuple(spectra)


def synthesis_step(c: np.ndarray, d: np.ndarray, filt: WaveletFilter, axis: int = -1) -> np.ndarray:
    """Adjoint (= inverse) of :func:`analysis_step`."""
    c = np.moveaxis(np.asarray(c, dtype=float), axis, -1)
    d = np.moveaxis(np.asarray(d, dtype=float), axis, -1)
    half = c.shape[-1]
    n = 2 * half
    he, ho, ge, go = _synthesis_spectra(filt.name, n)
    cf = np.fft.rfft(c)
    df = np.fft.rfft(d)
    x = np.empty(c.shape[:-1] + (n,))
    x[..., 0::2] = np.fft.irfft(cf * he + df * ge, half)
    x[..., 1::2] = np.fft.irfft(cf * ho + df * go, half)
    return np.moveaxis(x, -1, axis)


def dwt_1d(x, filt: WaveletFilter | str, levels: int) -> WaveletCoeffs:
    """Forward transform along the last axis (leading axes are batch axes)."""
    if not isinstance(filt, WaveletFilter):
        filt = filter_coeffs(filt)
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    _check_levels(n, levels)
    details = []
    c = x
    for _ in range(levels):
        c, d = analysis_step(c, filt)
        details.append(d)
    data = np.concatenate([c, *reversed(details)], axis=-1)
    return WaveletCoeffs(data, n, levels, filt)


def idwt_1d(coeffs: WaveletCoeffs) -> np.ndarray:
    data = coeffs.data
    size = coeffs.coarse_size
    c = data[..., :size]
    for _ in range(coeffs.levels):
        d = data[..., size : 2 * size]
        c = synthesis_step(c, d, coeffs.filter)
        size *= 2
    return c


def _image_array(image) -> np.ndarray:
    values = getattr(image, "values", image)
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError("2D transform needs a square image")
    return values


def dwt_2d(image, filt: WaveletFilter | str, levels: int) -> WaveletCoeffs:
    """Separable transform: rows then columns of the current LL block per level."""
    if not isinstance(filt, WaveletFilter):
        filt = filter_coeffs(filt)
    out = _image_array(image).copy()
    n = out.shape[0]
    _check_levels(n, levels)
    size = n
    for _ in range(levels):
        block = out[:size, :size]
        lo, hi = analysis_step(block, filt, axis=1)
        block = np.concatenate([lo, hi], axis=1)
        lo, hi = analysis_step(block, filt, axis=0)
        out[:size, :size] = np.concatenate([lo, hi], axis=0)
        size //= 2
    return WaveletCoeffs(out, n, levels, filt, dims=2)


def idwt_2d(coeffs: WaveletCoeffs):
    from .signals import Signal2D

    out = np.array(coeffs.data, dtype=float)
    size = coeffs.coarse_size * 2
    for _ in range(coeffs.levels):
        half = size // 2
        block = out[:size, :size]
        block = synthesis_step(block[:half], block[half:], coeffs.filter, axis=0)
        block = synthesis_step(block[:, :half], block[:, half:], coeffs.filter, axis=1)
        out[:size, :size] = block
        size *= 2
    return Signal2D(out)


def scaling_growth(signal, filt: WaveletFilter | str, max_levels: int) -> np.ndarray:
    """RMS of the scaling coefficients after each of ``max_levels`` cascade steps."""
    if not isinstance(filt, WaveletFilter):
        filt = filter_coeffs(filt)
    c = np.asarray(getattr(signal, "values", signal), dtype=float)
    _check_levels(c.size, max_levels)
    rms = []
    for _ in range(max_levels):
        c, _ = analysis_step(c, filt)
        rms.append(math.sqrt(np.mean(c * c)))
    return np.array(rms)
