"""Noise laws used to dither the signal before thresholding.

Only the Gaussian family is shipped. Every estimator talks to the noise
through :class:`NoiseModel`, so adding a family means adding a branch here
and nothing else.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import special


class Family(str, enum.Enum):
    GAUSSIAN = "gaussian"


def _finite(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("noise model evaluated at a non-finite point")
    return x


def _scalar_or_array(x: np.ndarray):
    return float(x) if x.ndim == 0 else x


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean noise with scale ``sigma``.

    ``cdf``, ``pdf``, ``quantile`` and ``score`` accept scalars or arrays
    and return the same shape.
    """

    sigma: float = 1.0
    family: Family = Family.GAUSSIAN

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma!r}")
        object.__setattr__(self, "family", Family(self.family))

    def cdf(self, x):
        z = _finite(x) / self.sigma
        return _scalar_or_array(special.ndtr(z))

    def pdf(self, x):
        z = _finite(x) / self.sigma
        return _scalar_or_array(np.exp(-0.5 * z * z) / (np.sqrt(2 * np.pi) * self.sigma))

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        if np.any(np.isnan(p)) or np.any((p < 0) | (p > 1)):
            raise ValueError("quantile argument outside [0, 1]")
        if np.any((p == 0) | (p == 1)):
            raise ValueError("quantile of 0 or 1 is infinite; clip probabilities first")
        return _scalar_or_array(self.sigma * special.ndtri(p))

    def score(self, x):
        """Log-density derivative f'/f; equals -x / sigma**2 for the Gaussian."""
        return _scalar_or_array(-_finite(x) / self.sigma**2)

    def with_sigma(self, sigma: float) -> "NoiseModel":
        return NoiseModel(sigma=sigma, family=self.family)


def derive_seed(base_seed: int, *keys: int) -> int:
    """Mix ``base_seed`` and integer keys into an independent 64-bit seed.

    Uses numpy's SeedSequence hashing, so seeds derived from distinct key
    tuples give statistically independent streams regardless of the order
    in which they are requested.
    """
    entropy = [int(base_seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)]
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)
    return int(state[0])


def rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator for a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def sample(n: int, model: NoiseModel, seed: int) -> np.ndarray:
    """Draw ``n`` i.i.d. noise values; identical output for identical seed."""
    if n < 1:
        raise ValueError("sample size must be at least 1")
    return model.sigma * rng(seed).standard_normal(n)
