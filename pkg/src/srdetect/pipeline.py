"""End-to-end recovery of sub-threshold signals from tri-state data.

Four routes, all sharing the estimators in :mod:`srdetect.detector`:

* 1D data domain: one noisy draw per time point, Nadaraya-Watson pooling.
* 1D multiscale: the same, applied to the packed wavelet coefficients (or
  only the scaling block) and mapped back with the inverse transform.
* 2D data domain: ``replicates_per_point`` draws per pixel, no pooling.
* 2D multiscale: per-coefficient replicated draws on the 2D transform.

Every public ``recover_*`` function has a ``*_batch`` twin that runs several
replicates (one seed each) at once; the harness uses the batch form.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import detector as det
from .detector import ExceedanceEstimate, ThetaEstimate, Thresholds
from .noise import NoiseModel, rng, sample
from .signals import Signal1D, Signal2D
from .wavelet import WaveletCoeffs, dwt_1d, dwt_2d, filter_coeffs, idwt_1d, idwt_2d

PIXEL_CHUNK = 1 << 15


class NoiseScope(str, enum.Enum):
    ALL = "all"
    SCALING = "scaling"


@dataclass(frozen=True)
class WaveletSpec:
    filter: str = "symmlet8"
    levels: int = 3

    def __post_init__(self):
        object.__setattr__(self, "filter", filter_coeffs(self.filter).name.value)
        if self.levels < 1:
            raise ValueError("wavelet levels must be >= 1")


@dataclass(frozen=True)
class RecoveryConfig:
    thresholds: Thresholds
    model: NoiseModel
    bandwidth: float | None = None
    wavelet: WaveletSpec | None = None
    replicates_per_point: int = 100
    seed: int = 0
    local_neff: bool = False
    optimal_weights: bool = False
    noise_scope: NoiseScope = NoiseScope.ALL

    def __post_init__(self):
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        object.__setattr__(self, "noise_scope", NoiseScope(self.noise_scope))


@dataclass(frozen=True)
class RecoveryBatch:
    """Recoveries for several replicates, stacked on axis 0."""

    theta: np.ndarray
    theta_a: np.ndarray
    theta_b: np.ndarray
    exceedance: ExceedanceEstimate | None = None


@dataclass(frozen=True)
class RecoveryResult:
    theta_hat: Signal1D | Signal2D
    theta_a_hat: Signal1D | Signal2D
    theta_b_hat: Signal1D | Signal2D
    exceedance: ExceedanceEstimate
    config: RecoveryConfig = field(repr=False)


def _require_bandwidth(cfg: RecoveryConfig) -> float:
    if cfg.bandwidth is None:
        raise ValueError("this recovery mode needs a kernel bandwidth")
    return cfg.bandwidth


def _require_wavelet(cfg: RecoveryConfig) -> WaveletSpec:
    if cfg.wavelet is None:
        raise ValueError("multiscale recovery needs a wavelet block (filter, levels)")
    return cfg.wavelet


def _require_replicates(cfg: RecoveryConfig) -> int:
    if cfg.replicates_per_point < 2:
        raise ValueError("replicates_per_point must be >= 2 (variance undefined otherwise)")
    return cfg.replicates_per_point


def _warn_if_not_subthreshold(values: np.ndarray, thresholds: Thresholds) -> None:
    if values.min() <= thresholds.a or values.max() >= thresholds.b:
        warnings.warn(
            "signal is not strictly between the thresholds; recovery is not a sub-threshold problem",
            RuntimeWarning,
            stacklevel=3,
        )


def combine(exceedance: ExceedanceEstimate, cfg: RecoveryConfig) -> ThetaEstimate:
    """Single-side estimates plus the variance-weighted (or covariance-optimal)
    combination."""
    est = det.estimate(exceedance, cfg.thresholds, cfg.model)
    if not cfg.optimal_weights:
        return est
    C = det.covariance_plugin(exceedance.p_a, exceedance.p_b, exceedance.n_eff, cfg.model)
    # fall back to the C = 0 weights where the plug-in covariance makes the
    # optimal weights degenerate
    C = np.where(est.v_a + est.v_b - 2 * C > 0, C, 0.0)
    theta = det.theta_double_optimal(est.theta_a, est.theta_b, est.v_a, est.v_b, C)
    return ThetaEstimate(est.theta_a, est.theta_b, theta, est.v_a, est.v_b)


def _nw_recover(values: np.ndarray, times: np.ndarray, cfg: RecoveryConfig, seeds) -> tuple[ThetaEstimate, ExceedanceEstimate]:
    n = values.size
    noisy = values + np.stack([sample(n, cfg.model, s) for s in seeds])
    series = det.encode(noisy, cfg.thresholds)
    exc = det.exceedance_nw(series, times, _require_bandwidth(cfg), local_neff=cfg.local_neff)
    return combine(exc, cfg), exc


def _replicated_recover(values: np.ndarray, cfg: RecoveryConfig, seed: int) -> tuple[ThetaEstimate, ExceedanceEstimate]:
    """Per-point MLE from ``replicates_per_point`` independent draws each."""
    m = _require_replicates(cfg)
    flat = values.ravel()
    count_a = np.empty(flat.size)
    count_b = np.empty(flat.size)
    gen = rng(seed)
    a, b = cfg.thresholds.a, cfg.thresholds.b
    for start in range(0, flat.size, PIXEL_CHUNK):
        block = flat[start : start + PIXEL_CHUNK]
        x = block[:, None] + cfg.model.sigma * gen.standard_normal((block.size, m))
        count_a[start : start + block.size] = np.count_nonzero(x < a, axis=1)
        count_b[start : start + block.size] = np.count_nonzero(x > b, axis=1)
    exc = ExceedanceEstimate(
        (count_a / m).reshape(values.shape),
        (count_b / m).reshape(values.shape),
        np.full(values.shape, float(m)),
    )
    return combine(exc, cfg), exc


def _index_times(n: int) -> np.ndarray:
    return np.arange(n) / (n - 1)


def recover_1d_data_batch(signal: Signal1D, cfg: RecoveryConfig, seeds) -> RecoveryBatch:
    _require_bandwidth(cfg)
    _warn_if_not_subthreshold(signal.values, cfg.thresholds)
    est, exc = _nw_recover(signal.values, signal.times, cfg, seeds)
    return RecoveryBatch(est.theta, est.theta_a, est.theta_b, exc)


def _scaling_only(cfg: RecoveryConfig) -> bool:
    return cfg.noise_scope is NoiseScope.SCALING


def recover_1d_multiscale_batch(signal: Signal1D, cfg: RecoveryConfig, seeds) -> RecoveryBatch:
    spec = _require_wavelet(cfg)
    _require_bandwidth(cfg)
    coeffs = dwt_1d(signal.values, spec.filter, spec.levels)
    # the smoother runs over the coefficient index of whatever block is noised
    target = coeffs.scaling if _scaling_only(cfg) else coeffs.data
    est, exc = _nw_recover(target, _index_times(target.size), cfg, seeds)

    def back(d_hat):
        full = np.zeros((d_hat.shape[0], coeffs.n))
        full[:, : target.size] = d_hat
        return idwt_1d(coeffs.with_data(full))

    return RecoveryBatch(back(est.theta), back(est.theta_a), back(est.theta_b), exc)


def recover_2d_data_batch(image: Signal2D, cfg: RecoveryConfig, seeds) -> RecoveryBatch:
    _require_replicates(cfg)
    _warn_if_not_subthreshold(image.values, cfg.thresholds)
    out = [_replicated_recover(image.values, cfg, s)[0] for s in seeds]
    return RecoveryBatch(
        np.stack([e.theta for e in out]),
        np.stack([e.theta_a for e in out]),
        np.stack([e.theta_b for e in out]),
    )


def _multiscale_2d(image: Signal2D, cfg: RecoveryConfig, seed: int):
    """Per-coefficient replicated estimate on the 2D transform, inverted.

    Returns ``(theta, theta_a, theta_b)`` images and the coefficient-domain
    exceedance estimate.
    """
    spec = _require_wavelet(cfg)
    _require_replicates(cfg)
    coeffs = dwt_2d(image, spec.filter, spec.levels)
    s = coeffs.coarse_size
    target = coeffs.scaling if _scaling_only(cfg) else coeffs.data
    est, exc = _replicated_recover(target, cfg, seed)

    def back(d_hat) -> np.ndarray:
        full = d_hat
        if _scaling_only(cfg):
            full = np.zeros_like(coeffs.data)
            full[:s, :s] = d_hat
        return idwt_2d(coeffs.with_data(full)).values

    return (back(est.theta), back(est.theta_a), back(est.theta_b)), exc


def recover_2d_multiscale_batch(image: Signal2D, cfg: RecoveryConfig, seeds) -> RecoveryBatch:
    out = [_multiscale_2d(image, cfg, seed)[0] for seed in seeds]
    return RecoveryBatch(*(np.stack(parts) for parts in zip(*out)))


def _single_1d(batch_fn, signal: Signal1D, cfg: RecoveryConfig) -> RecoveryResult:
    batch = batch_fn(signal, cfg, [cfg.seed])
    exc = batch.exceedance
    exc = ExceedanceEstimate(exc.p_a[0], exc.p_b[0], exc.n_eff[0], exc.bandwidth)
    return RecoveryResult(
        Signal1D(batch.theta[0], signal.times),
        Signal1D(batch.theta_a[0], signal.times),
        Signal1D(batch.theta_b[0], signal.times),
        exc,
        cfg,
    )


def recover_1d_data(signal: Signal1D, cfg: RecoveryConfig) -> RecoveryResult:
    """Data-domain recovery of a time-varying signal (one replicate, ``cfg.seed``)."""
    return _single_1d(recover_1d_data_batch, signal, cfg)


def recover_1d_multiscale(signal: Signal1D, cfg: RecoveryConfig) -> RecoveryResult:
    """Recovery with noise added to the wavelet coefficients.

    ``exceedance`` in the result refers to the coefficient domain.
    """
    return _single_1d(recover_1d_multiscale_batch, signal, cfg)


def recover_2d_data(image: Signal2D, cfg: RecoveryConfig) -> RecoveryResult:
    _require_replicates(cfg)
    _warn_if_not_subthreshold(image.values, cfg.thresholds)
    est, exc = _replicated_recover(image.values, cfg, cfg.seed)
    return RecoveryResult(Signal2D(est.theta), Signal2D(est.theta_a), Signal2D(est.theta_b), exc, cfg)


def recover_2d_multiscale(image: Signal2D, cfg: RecoveryConfig) -> RecoveryResult:
    """Per-coefficient recovery on the 2D transform (one replicate, ``cfg.seed``).

    ``exceedance`` in the result refers to the coefficient domain.
    """
    (theta, theta_a, theta_b), exc = _multiscale_2d(image, cfg, cfg.seed)
    return RecoveryResult(Signal2D(theta), Signal2D(theta_a), Signal2D(theta_b), exc, cfg)


def coefficient_estimate(coeffs: WaveletCoeffs, cfg: RecoveryConfig) -> ThetaEstimate:
    """Per-coefficient replicated estimate of a 2D coefficient array (no inverse)."""
    return _replicated_recover(coeffs.data, cfg, cfg.seed)[0]
