"""Experiment configuration: strict JSON schema with grid defaults.

Unknown keys are rejected at every nesting level, so a typo such as
``"sigma_gird"`` fails loudly instead of silently running the default grid.
"""

from __future__ import annotations

import enum
import json
import math
from pathlib import Path
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from .signals import Kind

SINCOS = "sincos"
GRID_STEP = 0.05
BANDWIDTH_RANGE = (0.001, 0.5)
BANDWIDTH_POINTS = 10

# default sigma ranges, keyed by (domain, is_2d)
SIGMA_RANGES = {
    ("data", False): (1.0, 5.0),
    ("multiscale", False): (1.0, 4.0),
    ("data", True): (0.25, 2.0),
    ("multiscale", True): (0.25, 2.0),
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""


class Detector(str, enum.Enum):
    SUB = "sub"
    SUP = "sup"
    DOUBLE = "double"
    DOUBLE_OPTIMAL = "double-optimal"


class Domain(str, enum.Enum):
    DATA = "data"
    MULTISCALE = "multiscale"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SignalSpec(_Strict):
    kind: Optional[str] = None
    n: Optional[int] = None
    path: Optional[str] = None
    rescale: Optional[tuple[float, float]] = None

    @field_validator("kind")
    @classmethod
    def _known_kind(cls, v):
        if v is None or v == SINCOS:
            return v
        return Kind.parse(v).value

    @model_validator(mode="after")
    def _one_source(self):
        if (self.kind is None) == (self.path is None):
            raise ValueError("give exactly one of kind or path")
        if self.kind is not None and self.n is None:
            raise ValueError("generated signals need n")
        if self.rescale is not None and not self.rescale[1] > self.rescale[0]:
            raise ValueError("rescale needs lo < hi")
        return self

    @property
    def is_2d(self) -> bool:
        return self.path is not None or self.kind == SINCOS


class WaveletBlock(_Strict):
    filter: str = "symmlet8"
    levels: int = 3

    @field_validator("filter")
    @classmethod
    def _known_filter(cls, v):
        from .wavelet import filter_coeffs

        return filter_coeffs(v).name.value

    @field_validator("levels")
    @classmethod
    def _positive(cls, v):
        if v < 1:
            raise ValueError("levels must be >= 1")
        return v


class ThresholdBlock(_Strict):
    a: float
    b: float

    @model_validator(mode="after")
    def _ordered(self):
        if not self.a < self.b:
            raise ValueError("need a < b")
        return self


class ExperimentConfig(_Strict):
    signal: SignalSpec
    detector: Detector
    domain: Domain
    sigma_grid: tuple[float, ...]
    bandwidth_grid: Optional[tuple[float, ...]] = None
    wavelet: Optional[WaveletBlock] = None
    replicates: int = 100
    base_seed: int = 42
    thresholds: Optional[ThresholdBlock] = None
    replicates_per_point: int = 100
    local_neff: bool = False
    noise_scope: str = "all"
    sweep_levels: Optional[tuple[int, ...]] = None

    @model_validator(mode="before")
    @classmethod
    def _fill_grids(cls, data: Any):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        signal = data.get("signal") or {}
        is_2d = isinstance(signal, dict) and (signal.get("path") is not None or signal.get("kind") == SINCOS)
        domain = str(data.get("domain", "data"))
        lo, hi = SIGMA_RANGES.get((domain, is_2d), (1.0, 5.0))
        data["sigma_grid"] = _expand(data.get("sigma_grid", {"min": lo, "max": hi, "step": GRID_STEP}), "sigma_grid")
        if "bandwidth_grid" in data:
            data["bandwidth_grid"] = _expand(data["bandwidth_grid"], "bandwidth_grid")
        elif not is_2d:
            data["bandwidth_grid"] = log_grid(*BANDWIDTH_RANGE, BANDWIDTH_POINTS)
        if domain == "multiscale" and data.get("wavelet") is None:
            data["wavelet"] = {}
        return data

    @field_validator("replicates")
    @classmethod
    def _replicates(cls, v):
        if v < 2:
            raise ValueError("replicates must be ≥ 2")
        return v

    @field_validator("replicates_per_point")
    @classmethod
    def _per_point(cls, v):
        if v < 2:
            raise ValueError("replicates_per_point must be ≥ 2")
        return v

    @field_validator("sigma_grid", "bandwidth_grid")
    @classmethod
    def _positive_grid(cls, v):
        if v is None:
            return v
        if len(v) == 0:
            raise ValueError("grid must be nonempty")
        if any(not (math.isfinite(x) and x > 0) for x in v):
            raise ValueError("grid values must be positive and finite")
        return v

    @field_validator("noise_scope")
    @classmethod
    def _scope(cls, v):
        if v not in ("all", "scaling"):
            raise ValueError("noise_scope must be 'all' or 'scaling'")
        return v

    @field_validator("base_seed")
    @classmethod
    def _seed_range(cls, v):
        if not 0 <= v < 2**64:
            raise ValueError("base_seed must be a 64-bit unsigned integer")
        return v

    @model_validator(mode="after")
    def _mode_consistency(self):
        if not self.signal.is_2d and self.bandwidth_grid is None:
            raise ValueError("1D experiments need a bandwidth_grid")
        if self.domain is Domain.MULTISCALE and self.wavelet is None:
            raise ValueError("multiscale domain needs a wavelet block")
        return self

    def echo(self) -> dict:
        """Fully resolved JSON-ready form; ``parse_config_dict(echo())`` is a fixed point."""
        return self.model_dump(mode="json")


def _expand(spec, key: str):
    """A grid is either an explicit list or ``{min, max, step}`` / ``{min, max, num}``."""
    if isinstance(spec, dict):
        unknown = set(spec) - {"min", "max", "step", "num"}
        if unknown:
            raise ConfigError(f"{key}: unknown grid keys {sorted(unknown)}")
        try:
            lo, hi = float(spec["min"]), float(spec["max"])
        except KeyError as exc:
            raise ConfigError(f"{key}: missing {exc.args[0]!r}") from None
        if "step" in spec:
            return linear_grid(lo, hi, float(spec["step"]))
        if "num" in spec:
            return log_grid(lo, hi, int(spec["num"]))
        raise ConfigError(f"{key}: give step (linear) or num (log-spaced)")
    return spec


def linear_grid(lo: float, hi: float, step: float) -> list[float]:
    """Inclusive arithmetic grid, rounded to kill accumulated float noise."""
    if not (step > 0 and hi >= lo):
        raise ConfigError("linear grid needs step > 0 and max >= min")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 10) for i in range(count)]


def log_grid(lo: float, hi: float, num: int) -> list[float]:
    if not (0 < lo <= hi and num >= 1):
        raise ConfigError("log grid needs 0 < min <= max and num >= 1")
    return [float(f"{x:.6g}") for x in np.geomspace(lo, hi, num)]


def parse_config_dict(raw: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        msg = first["msg"].removeprefix("Value error, ")
        if first["type"] == "extra_forbidden":
            msg = "unknown key"
        elif first["type"] == "missing":
            msg = "required key missing"
        raise ConfigError(f"{where}: {msg}" if where else msg) from None


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return parse_config_dict(raw)
