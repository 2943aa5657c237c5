"""Threshold encoding and the single/double threshold estimators.

Probabilities are clipped to ``[1/(2n), 1 - 1/(2n)]`` before any quantile is
taken, so the estimators stay finite when a category was never observed.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass

import numpy as np
from scipy import special

from .noise import Family, NoiseModel


class Side(str, enum.Enum):
    LOWER = "lower"
    UPPER = "upper"


@dataclass(frozen=True)
class Thresholds:
    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError("thresholds must be finite")
        if not self.a < self.b:
            raise ValueError(f"need a < b, got a={self.a}, b={self.b}")

    def shifted(self, c: float) -> "Thresholds":
        return Thresholds(self.a + c, self.b + c)


@dataclass(frozen=True)
class TriStateSeries:
    y: np.ndarray
    thresholds: Thresholds

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.int8)
        if not np.all(np.isin(y, (-1, 0, 1))):
            raise ValueError("tri-state entries must be -1, 0 or +1")
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.y.shape[-1] if self.y.ndim else 1


@dataclass(frozen=True)
class ExceedanceEstimate:
    p_a: np.ndarray
    p_b: np.ndarray
    n_eff: np.ndarray
    bandwidth: float | None = None


@dataclass(frozen=True)
class ThetaEstimate:
    theta_a: np.ndarray
    theta_b: np.ndarray
    theta: np.ndarray
    v_a: np.ndarray
    v_b: np.ndarray


def encode(x, thresholds: Thresholds) -> TriStateSeries:
    """+1 where x > b, -1 where x < a, 0 otherwise (strict comparisons)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot encode non-finite observations")
    y = (x > thresholds.b).astype(np.int8) - (x < thresholds.a).astype(np.int8)
    return TriStateSeries(y, thresholds)


def exceedance_mle(series: TriStateSeries, axis: int | None = None) -> ExceedanceEstimate:
    """Relative frequencies of -1 and +1.

    With ``axis=None`` the whole series is pooled into a length-1 estimate;
    otherwise counts are taken along ``axis`` (one estimate per remaining
    index, used for per-pixel replicated draws).
    """
    y = series.y
    if y.size == 0:
        raise ValueError("cannot estimate exceedance from an empty series")
    if axis is None:
        n = y.size
        p_a = np.array([np.count_nonzero(y == -1) / n])
        p_b = np.array([np.count_nonzero(y == 1) / n])
    else:
        n = y.shape[axis]
        p_a = np.count_nonzero(y == -1, axis=axis) / n
        p_b = np.count_nonzero(y == 1, axis=axis) / n
    return ExceedanceEstimate(p_a, p_b, np.full(p_a.shape, float(n)))


@functools.lru_cache(maxsize=32)
def _kernel_rows(times_key: bytes, n: int, bandwidth: float):
    times = np.frombuffer(times_key, dtype=float)
    diff = (times[:, None] - times[None, :]) / bandwidth
    k = np.exp(-0.5 * diff * diff)
    mass = k.sum(axis=1)
    if np.any(mass <= 0):
        raise ValueError("zero kernel mass at some time point")
    weights = k / mass[:, None]
    weights.setflags(write=False)
    # the Gaussian kernel peaks on the diagonal, so max_j K_ij = K(0) = 1
    n_eff = mass / k.max(axis=1)
    n_eff.setflags(write=False)
    return weights, n_eff


def nw_weights(times, bandwidth: float):
    """Row-normalised Gaussian kernel weights and effective sample sizes.

    Returns ``(W, n_eff)`` where ``W[i, j] = K((t_i - t_j)/w) / sum_j K(...)``
    and ``n_eff[i] = sum_j K_ij / max_j K_ij``. Cached per (times, bandwidth).
    """
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    times = np.ascontiguousarray(times, dtype=float)
    return _kernel_rows(times.tobytes(), times.size, float(bandwidth))


def exceedance_nw(
    series: TriStateSeries, times, bandwidth: float, *, local_neff: bool = False
) -> ExceedanceEstimate:
    """Nadaraya-Watson estimates of the exceedance probabilities at each time.

    ``series.y`` may carry leading replicate axes; smoothing runs along the
    last axis. The variance sample size (and clipping bound) is the series
    length; ``local_neff=True`` switches to the local effective kernel size
    ``sum_j K_ij / max_j K_ij``.
    """
    times = np.asarray(times, dtype=float)
    y = series.y
    if y.shape[-1] != times.size:
        raise ValueError("times and series lengths differ")
    weights, n_eff = nw_weights(times, bandwidth)
    lead = y.shape[:-1]
    flat = y.reshape(-1, times.size)
    ind = np.concatenate([(flat == -1), (flat == 1)], axis=0).astype(float)
    smoothed = ind @ weights.T
    # clamp rounding excursions beyond [0, 1]
    np.clip(smoothed, 0.0, 1.0, out=smoothed)
    m = flat.shape[0]
    p_a = smoothed[:m].reshape(*lead, times.size)
    p_b = smoothed[m:].reshape(*lead, times.size)
    if not local_neff:
        n_eff = np.full(times.size, float(times.size))
    return ExceedanceEstimate(p_a, p_b, np.broadcast_to(n_eff, p_a.shape), float(bandwidth))


def clip_probability(p, n_eff):
    """Continuity-corrected clip into [1/(2n), 1 - 1/(2n)]."""
    p = np.asarray(p, dtype=float)
    n_eff = np.asarray(n_eff, dtype=float)
    lo = 0.5 / n_eff
    return np.clip(p, lo, 1.0 - lo)


def theta_single(p_hat, side: Side, thresholds: Thresholds, model: NoiseModel, n_eff):
    """Invert one exceedance probability into a signal estimate.

    Lower: ``a - F^{-1}(p_a)``; Upper: ``b - F^{-1}(1 - p_b)``.
    """
    p = clip_probability(p_hat, n_eff)
    if Side(side) is Side.LOWER:
        return thresholds.a - model.quantile(p)
    return thresholds.b - model.quantile(1.0 - p)


def variance_hat(p_hat, n_eff, model: NoiseModel):
    """Delta-method variance ``p(1-p) / (n f(F^{-1}(p))^2)``."""
    n_eff = np.asarray(n_eff, dtype=float)
    if np.any(n_eff < 1):
        raise ValueError("effective sample size must be >= 1")
    p = clip_probability(p_hat, n_eff)
    density = model.pdf(model.quantile(p))
    return p * (1.0 - p) / (n_eff * density * density)


def theta_double(theta_a, theta_b, v_a, v_b):
    """Inverse-variance style combination; each side is weighted by the other's variance."""
    v_a = np.asarray(v_a, dtype=float)
    v_b = np.asarray(v_b, dtype=float)
    total = v_a + v_b
    if np.any(total <= 0):
        raise ValueError("variance weights must sum to a positive value")
    return (v_a / total) * np.asarray(theta_b) + (v_b / total) * np.asarray(theta_a)


def theta_double_optimal(theta_a, theta_b, v_a, v_b, C):
    """Minimum-variance combination ``w*theta_a + (1-w)*theta_b`` given covariance C.

    ``w = (v_b - C) / (v_a + v_b - 2C)``; with ``C = 0`` this is
    :func:`theta_double` exactly.
    """
    v_a = np.asarray(v_a, dtype=float)
    v_b = np.asarray(v_b, dtype=float)
    C = np.asarray(C, dtype=float)
    denom = v_a + v_b - 2.0 * C
    if np.any(denom <= 0):
        raise ValueError("degenerate covariance: v_a + v_b - 2C must be positive")
    w_a = (v_b - C) / denom
    w_b = (v_a - C) / denom
    return w_b * np.asarray(theta_b) + w_a * np.asarray(theta_a)


def estimate(exceedance: ExceedanceEstimate, thresholds: Thresholds, model: NoiseModel) -> ThetaEstimate:
    """Both single-side estimates, their variances and the combined estimate."""
    n_eff = exceedance.n_eff
    theta_a = theta_single(exceedance.p_a, Side.LOWER, thresholds, model, n_eff)
    theta_b = theta_single(exceedance.p_b, Side.UPPER, thresholds, model, n_eff)
    v_a = variance_hat(exceedance.p_a, n_eff, model)
    v_b = variance_hat(exceedance.p_b, n_eff, model)
    return ThetaEstimate(theta_a, theta_b, theta_double(theta_a, theta_b, v_a, v_b), v_a, v_b)


MAX_EXACT_N = 200


@functools.lru_cache(maxsize=None)
def _count_table(n: int, family: Family = Family.GAUSSIAN):
    """Lattice of (x_a, x_b) with x_a + x_b <= n, log multinomial coefficients
    and clipped standard-normal quantiles at x_a/n and (n - x_b)/n."""
    xa, xb = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    keep = xa + xb <= n
    xa, xb = xa[keep].astype(float), xb[keep].astype(float)
    rest = n - xa - xb
    log_coef = special.gammaln(n + 1) - special.gammaln(xa + 1) - special.gammaln(xb + 1) - special.gammaln(rest + 1)
    lo = 0.5 / n
    unit = NoiseModel(1.0, family)
    qa = unit.quantile(np.clip(xa / n, lo, 1 - lo))
    qb = unit.quantile(np.clip((n - xb) / n, lo, 1 - lo))
    return xa, xb, rest, log_coef, qa, qb


def multinomial_weights(p_a: float, p_b: float, n: int) -> np.ndarray:
    """Multinomial pmf over the (x_a, x_b) lattice of :func:`_count_table`."""
    xa, xb, rest, log_coef, _, _ = _count_table(n)
    p_ab = max(1.0 - p_a - p_b, 0.0)
    logp = log_coef + special.xlogy(xa, p_a) + special.xlogy(xb, p_b) + special.xlogy(rest, p_ab)
    return np.exp(logp)


def _check_exact_args(p_a, p_b, n):
    if n > MAX_EXACT_N:
        raise ValueError(f"exact covariance restricted to small n (n <= {MAX_EXACT_N}), got n={n}")
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (0 < p_a < 1 and 0 < p_b < 1) or p_a + p_b > 1:
        raise ValueError("probabilities must lie in (0, 1) with p_a + p_b <= 1")


def covariance_multinomial(p_a: float, p_b: float, n: int, model: NoiseModel) -> float:
    """Exact Cov(F^{-1}(p_a_hat), F^{-1}(1 - p_b_hat)) under multinomial counts.

    Sums over every count pair (x_a, x_b) with x_a + x_b <= n, plugging the
    given probabilities into the multinomial law. Quantile arguments are
    clipped like the estimators clip them.
    """
    _check_exact_args(p_a, p_b, n)
    _, _, _, _, qa, qb = _count_table(n, model.family)
    w = multinomial_weights(p_a, p_b, n)
    e_ab = np.dot(w, qa * qb)
    e_a = np.dot(w, qa)
    e_b = np.dot(w, qb)
    return float(model.sigma**2 * (e_ab - e_a * e_b))


@functools.lru_cache(maxsize=200_000)
def _standard_covariance_counts(n: int, ka: int, kb: int, family: Family) -> float:
    lo = 0.5 / n
    p_a = min(max(ka / n, lo), 1 - lo)
    p_b = min(max(kb / n, lo), 1 - lo)
    if p_a + p_b > 1:
        p_b = 1 - p_a
    return covariance_multinomial(p_a, p_b, n, NoiseModel(1.0, family))


def covariance_plugin(p_a, p_b, n_eff, model: NoiseModel):
    """Vectorised covariance for the optimal-weight estimator.

    Each point's probabilities are snapped to the count lattice of size
    ``m = clip(round(n_eff), 2, 200)`` and the exact sum is evaluated (and
    cached) per distinct ``(m, k_a, k_b)``. When ``n_eff`` exceeds the
    lattice cap the result is rescaled by ``m / n_eff``, the covariance
    being O(1/n).
    """
    p_a, p_b, n_eff = np.broadcast_arrays(
        np.asarray(p_a, dtype=float), np.asarray(p_b, dtype=float), np.asarray(n_eff, dtype=float)
    )
    m = np.clip(np.rint(n_eff), 2, MAX_EXACT_N).astype(int)
    ka = np.rint(p_a * m).astype(int)
    kb = np.minimum(np.rint(p_b * m).astype(int), m - ka)
    keys = np.stack([m.ravel(), ka.ravel(), kb.ravel()], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    values = np.array([_standard_covariance_counts(int(a), int(b), int(c), model.family) for a, b, c in uniq])
    scale = np.where(n_eff > MAX_EXACT_N, m / n_eff, 1.0)
    return model.sigma**2 * scale * values[inverse.ravel()].reshape(p_a.shape)


def asymptotic_variance(theta: float, threshold: float, side: Side, model: NoiseModel, n: int) -> float:
    """Delta-method variance of a single-side estimator at the true signal."""
    if n < 1:
        raise ValueError("n must be >= 1")
    u = threshold - theta
    if abs(u) > 8 * model.sigma:
        raise ValueError("threshold too far for reliable variance")
    Side(side)
    F = model.cdf(u)
    f = model.pdf(u)
    return F * (1 - F) / (n * f * f)
