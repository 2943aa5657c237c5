"""Test signals, image loading and amplitude rescaling."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ImageFormatError(ValueError):
    """Base class for unreadable image files."""


class MalformedHeaderError(ImageFormatError):
    pass


class UnsupportedBitDepthError(ImageFormatError):
    pass


class TruncatedImageError(ImageFormatError):
    pass


class RaggedCSVError(ImageFormatError):
    pass


@dataclass(frozen=True)
class Signal1D:
    values: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        times = np.asarray(self.times, dtype=float)
        if values.ndim != 1 or values.shape != times.shape or values.size < 2:
            raise ValueError("values and times must be 1D of equal length >= 2")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "times", times)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class Signal2D:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.size == 0:
            raise ValueError("image values must be a non-empty matrix")
        if not np.all(np.isfinite(values)):
            raise ValueError("image contains non-finite entries")
        object.__setattr__(self, "values", values)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


class Kind(str, enum.Enum):
    SINE = "sine"
    WAVE = "wave"
    DOPPLER = "doppler"
    TIME_SHIFTED_SINE = "timeshiftedsine"
    ANGLES = "angles"
    BLIP = "blip"
    PARABOLAS = "parabolas"

    @classmethod
    def parse(cls, name) -> "Kind":
        if isinstance(name, cls):
            return name
        key = str(name).lower().replace("-", "").replace("_", "").replace(" ", "")
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown signal kind {name!r}; expected one of {choices}") from None


BENCHMARK_KINDS = (
    Kind.WAVE,
    Kind.DOPPLER,
    Kind.TIME_SHIFTED_SINE,
    Kind.ANGLES,
    Kind.BLIP,
    Kind.PARABOLAS,
)


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


# Benchmark shapes on t in [0, 1]. Doppler is the Donoho-Johnstone form; the
# others follow Antoniadis, Bigot & Sapatinas (2001), the usual source for
# these names. Amplitudes are irrelevant because gen_1d rescales to [-1, 1].

def _wave(t):
    return 0.5 + 0.2 * np.cos(4 * np.pi * t) + 0.1 * np.cos(24 * np.pi * t)


def _doppler(t):
    return np.sqrt(t * (1 - t)) * np.sin(2.1 * np.pi / (t + 0.05))


def _time_shifted_sine(t):
    def g(u):
        return (1 - np.cos(np.pi * u)) / 2

    return 0.3 * np.sin(3 * np.pi * (g(g(g(g(t)))) + t)) + 0.5


def _angles(t):
    return np.piecewise(
        t,
        [
            t <= 0.15,
            (t > 0.15) & (t <= 0.2),
            (t > 0.2) & (t <= 0.5),
            (t > 0.5) & (t <= 0.6),
            (t > 0.6) & (t <= 0.65),
            (t > 0.65) & (t <= 0.85),
            t > 0.85,
        ],
        [
            lambda x: 2 * x + 0.5,
            lambda x: -12 * (x - 0.15) + 0.8,
            0.2,
            lambda x: 6 * (x - 0.5) + 0.2,
            lambda x: -10 * (x - 0.6) + 0.8,
            lambda x: -0.5 * (x - 0.65) + 0.3,
            lambda x: 2 * (x - 0.85) + 0.2,
        ],
    )


def _blip(t):
    left = 0.32 + 0.6 * t + 0.3 * np.exp(-100 * (t - 0.3) ** 2)
    right = -0.28 + 0.6 * t + 0.3 * np.exp(-100 * (t - 1.3) ** 2)
    return np.where(t <= 0.8, left, right)


def _parabolas(t):
    def r(c):
        return np.where(t > c, (t - c) ** 2, 0.0)

    return (
        0.8
        - 30 * r(0.1) + 60 * r(0.2) - 30 * r(0.3)
        + 500 * r(0.35) - 1000 * r(0.37) + 1000 * r(0.41) - 500 * r(0.43)
        + 7.5 * r(0.5) - 15 * r(0.7) + 7.5 * r(0.9)
    )


_SHAPES = {
    Kind.WAVE: _wave,
    Kind.DOPPLER: _doppler,
    Kind.TIME_SHIFTED_SINE: _time_shifted_sine,
    Kind.ANGLES: _angles,
    Kind.BLIP: _blip,
    Kind.PARABOLAS: _parabolas,
}


def gen_1d(kind, n: int) -> Signal1D:
    """Sample a named test signal on ``n`` equispaced points of [0, 1].

    ``sine`` is sin(x) for x in [0, 8*pi]; every other kind is rescaled to
    span exactly [-1, 1].
    """
    kind = Kind.parse(kind)
    if n < 8 or not is_power_of_two(n):
        raise ValueError(f"signal length must be a power of two >= 8, got {n}")
    t = np.arange(n) / (n - 1)
    if kind is Kind.SINE:
        return Signal1D(np.sin(8 * np.pi * t), t)
    values = _SHAPES[kind](t)
    return Signal1D(_affine(values, -1.0, 1.0), t)


def gen_2d_sincos(size: int) -> Signal2D:
    """sin(l) * cos(m) over a size x size grid with l, m in [pi, 8*pi]."""
    if size < 8 or not is_power_of_two(size):
        raise ValueError(f"image side must be a power of two >= 8, got {size}")
    grid = np.linspace(np.pi, 8 * np.pi, size)
    return Signal2D(np.outer(np.sin(grid), np.cos(grid)))


def _affine(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    vmin, vmax = values.min(), values.max()
    if vmax == vmin:
        raise ValueError("cannot rescale a constant signal")
    out = lo + (values - vmin) * ((hi - lo) / (vmax - vmin))
    # pin the extremes so min/max equal lo/hi exactly
    out[values == vmin] = lo
    out[values == vmax] = hi
    return out


def rescale(signal, lo: float = -1.0, hi: float = 1.0):
    """Affinely map the signal's [min, max] onto [lo, hi]."""
    if not hi > lo:
        raise ValueError("rescale needs hi > lo")
    if isinstance(signal, Signal1D):
        return Signal1D(_affine(signal.values, lo, hi), signal.times)
    if isinstance(signal, Signal2D):
        return Signal2D(_affine(signal.values, lo, hi))
    raise TypeError(f"cannot rescale {type(signal).__name__}")


def _pgm_tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens after the magic."""
    tokens = []
    pos = 2
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise MalformedHeaderError("PGM header ended early")
        tok = data[start:pos]
        if not tok.isdigit():
            raise MalformedHeaderError(f"bad PGM header field {tok!r}")
        tokens.append(int(tok))
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        if pos >= len(data):
            raise TruncatedImageError("unexpected end of pixel data")
        raise MalformedHeaderError("missing separator after PGM header")
    return tokens, pos + 1


def read_pgm(data: bytes) -> np.ndarray:
    if data[:2] != b"P5":
        raise MalformedHeaderError("not a binary PGM (P5) file")
    (width, height, maxval), offset = _pgm_tokens(data, 3)
    if width < 1 or height < 1:
        raise MalformedHeaderError("PGM dimensions must be positive")
    if not 0 < maxval <= 255:
        raise UnsupportedBitDepthError(f"unsupported bit depth (maxval {maxval}); only 8-bit PGM is read")
    body = data[offset : offset + width * height]
    if len(body) < width * height:
        raise TruncatedImageError("unexpected end of pixel data")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width).astype(float)


def write_pgm(path, image) -> None:
    """Write an 8-bit binary PGM; values are rounded and clipped to [0, 255]."""
    pixels = np.clip(np.rint(np.asarray(image, dtype=float)), 0, 255).astype(np.uint8)
    height, width = pixels.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (width, height))
        fh.write(pixels.tobytes())


def read_csv_matrix(text: str) -> np.ndarray:
    rows = [r for r in csv.reader(text.splitlines()) if r and any(c.strip() for c in r)]
    if not rows:
        raise RaggedCSVError("CSV matrix is empty")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise RaggedCSVError(f"CSV row {i + 1} has {len(row)} fields, expected {width}")
    try:
        return np.array([[float(c) for c in row] for row in rows])
    except ValueError as exc:
        raise ImageFormatError(f"non-numeric CSV entry: {exc}") from None


def load_image(path) -> Signal2D:
    """Load a P5 8-bit PGM or a headerless numeric CSV matrix."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] == b"P5":
        return Signal2D(read_pgm(data))
    if data[:1] == b"P" and data[1:2].isdigit():
        raise MalformedHeaderError(f"unsupported PNM variant {data[:2].decode()!r}; only P5 is read")
    return Signal2D(read_csv_matrix(data.decode("utf-8")))
