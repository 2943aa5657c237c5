"""Fisher information retained by threshold detectors under Gaussian noise.

Full-resolution observation of ``theta + N(0, sigma^2)`` carries
``1 / sigma^2``; the functions here give what survives one or two hard
thresholds.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)
_EPS = 1e-15


def _log_phi(u):
    return -0.5 * u * u - _LOG_SQRT_2PI


def retention_single(u):
    """Fraction of Fisher information kept by one threshold at standardized
    distance ``u``: ``phi(u)^2 / (Phi(u) (1 - Phi(u)))``.

    Evaluated in log space, so it is accurate (and tends to 0) for large
    ``|u|``.
    """
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("retention needs finite u")
    out = np.exp(2 * _log_phi(u) - special.log_ndtr(u) - special.log_ndtr(-u))
    return float(out) if out.ndim == 0 else out


def fi_double(theta, a, b, sigma):
    """Fisher information about ``theta`` in the tri-state observation.

    Parameters
    ----------
    theta, a, b : float or array_like
        Signal level and the lower/upper thresholds (broadcast together).
    sigma : float or array_like
        Noise standard deviation, positive.

    Returns
    -------
    float or ndarray
        ``(1/sigma^2) [phi_a^2/Phi_a + (phi_b - phi_a)^2/(Phi_b - Phi_a)
        + phi_b^2/(1 - Phi_b)]`` with ``u_a = (a - theta)/sigma`` and
        ``u_b = (b - theta)/sigma``. The middle term is taken as 0 when both
        its numerator and denominator fall below 1e-15.
    """
    theta, a, b, sigma = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (theta, a, b, sigma)))
    if np.any(~(sigma > 0)):
        raise ValueError("sigma must be positive")
    if np.any(a >= b):
        raise ValueError("fi_double needs a < b")
    ua = (a - theta) / sigma
    ub = (b - theta) / sigma
    lower = np.exp(2 * _log_phi(ua) - special.log_ndtr(ua))
    upper = np.exp(2 * _log_phi(ub) - special.log_ndtr(-ub))
    # Phi(ub) - Phi(ua) without cancellation: use whichever tail is smaller
    mass = np.where(
        ua > 0,
        special.ndtr(-ua) - special.ndtr(-ub),
        special.ndtr(ub) - special.ndtr(ua),
    )
    num = (np.exp(_log_phi(ub)) - np.exp(_log_phi(ua))) ** 2
    if np.any(mass < -_EPS):
        raise ValueError("Phi(u_b) < Phi(u_a): thresholds out of order")
    degenerate = (mass < _EPS) & (num < _EPS)
    middle = np.where(degenerate, 0.0, num / np.where(degenerate, 1.0, np.maximum(mass, 1e-300)))
    out = (lower + middle + upper) / (sigma * sigma)
    return float(out) if out.ndim == 0 else out


class Plane(str, enum.Enum):
    THRESHOLD = "threshold-plane"
    THETA_SIGMA = "theta-sigma-plane"


@dataclass(frozen=True)
class FisherSurface:
    """FI over a 2D grid; ``values[i, j]`` is at ``(axis1[i], axis2[j])``.

    ``ridge`` rows are ``(axis1[i], argmax over axis2, max value)``; rows
    without a finite cell are skipped.
    """

    plane: Plane
    axis1: np.ndarray
    axis2: np.ndarray
    values: np.ndarray
    ridge: np.ndarray

    def argmax(self) -> tuple[float, float, float]:
        i, j = np.unravel_index(np.nanargmax(self.values), self.values.shape)
        return float(self.axis1[i]), float(self.axis2[j]), float(self.values[i, j])

    def to_csv(self, path) -> None:
        """Long-format export: ``axis1,axis2,value`` (empty value where undefined)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(["axis1", "axis2", "value"])
            for i, x in enumerate(self.axis1):
                for j, y in enumerate(self.axis2):
                    v = self.values[i, j]
                    w.writerow([repr(float(x)), repr(float(y)), "" if np.isnan(v) else repr(float(v))])


def grid_axis(lo: float, hi: float, step: float) -> np.ndarray:
    """Inclusive grid ``lo, lo + step, ..., hi`` (count fixed before rounding)."""
    if not (math.isfinite(lo) and math.isfinite(hi) and step > 0 and hi > lo):
        raise ValueError("grid needs finite bounds with hi > lo and step > 0")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    if count < 2:
        raise ValueError("grid needs at least two points per axis")
    return lo + step * np.arange(count)


def fi_surface(plane, axis1, axis2, *, theta: float | None = None, sigma: float | None = None,
               a: float | None = None, b: float | None = None) -> FisherSurface:
    """Evaluate :func:`fi_double` over a grid.

    ``threshold-plane``: axis1 = a, axis2 = b, with ``theta`` and ``sigma``
    fixed; cells with ``a >= b`` are NaN. ``theta-sigma-plane``: axis1 =
    theta, axis2 = sigma, with ``a`` and ``b`` fixed.
    """
    plane = Plane(plane)
    x = np.asarray(axis1, dtype=float)
    y = np.asarray(axis2, dtype=float)
    if x.ndim != 1 or y.ndim != 1 or x.size < 2 or y.size < 2:
        raise ValueError("each axis needs at least two points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("grid values must be finite")
    X, Y = np.meshgrid(x, y, indexing="ij")
    if plane is Plane.THRESHOLD:
        if theta is None or sigma is None:
            raise ValueError("threshold plane needs theta and sigma")
        ok = X < Y
        values = np.full(X.shape, np.nan)
        values[ok] = fi_double(theta, X[ok], Y[ok], sigma)
    else:
        if a is None or b is None:
            raise ValueError("theta-sigma plane needs a and b")
        if np.any(y <= 0):
            raise ValueError("sigma axis must be positive")
        values = fi_double(X, a, b, Y)
    ridge = []
    for i in range(x.size):
        row = values[i]
        if np.all(np.isnan(row)):
            continue
        j = int(np.nanargmax(row))
        ridge.append((x[i], y[j], row[j]))
    return FisherSurface(plane, x, y, values, np.array(ridge).reshape(-1, 3))
