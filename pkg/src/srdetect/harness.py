"""Monte-Carlo AMSE evaluation, (sigma, w) grid search and level sweeps.

Seeding contract: cell ``k`` of a grid (sigma-major order) gets
``derive_seed(base_seed, k)`` and replicate ``r`` inside it gets
``derive_seed(cell_seed, r)``. Nothing depends on execution order, so the
thread count never changes a report.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import pipeline
from .config import Detector, Domain, ExperimentConfig
from .detector import Thresholds
from .noise import NoiseModel, derive_seed
from .signals import Signal1D, Signal2D, gen_1d, gen_2d_sincos, load_image, rescale

THREADS_ENV = "SR_DETECT_THREADS"
# replicates per batch are capped so one batch holds about this many values
BATCH_VALUES = 1 << 18

Runner = Callable[[Signal1D | Signal2D, pipeline.RecoveryConfig, Sequence[int]], pipeline.RecoveryBatch]


def amse(truth, recoveries) -> float:
    """Squared bias of the pointwise mean recovery, averaged over points.

    Parameters
    ----------
    truth : array_like
        The true signal.
    recoveries : array_like or sequence of array_like
        At least two recoveries, each shaped like ``truth`` (stacked on
        axis 0 if given as one array).

    Returns
    -------
    float
        ``mean_i (truth_i - mean_r recovery_ri)**2``. Per-replicate scatter
        around the mean does not enter; see :func:`mse_mean` for that.
    """
    truth, stack = _check_recoveries(truth, recoveries)
    return float(np.mean((truth - stack.mean(axis=0)) ** 2))


def mse_mean(truth, recoveries) -> float:
    """Mean over replicates of the per-replicate mean squared error."""
    truth, stack = _check_recoveries(truth, recoveries)
    return float(np.mean((stack - truth) ** 2))


def _check_recoveries(truth, recoveries):
    truth = np.asarray(getattr(truth, "values", truth), dtype=float)
    stack = np.stack([np.asarray(getattr(r, "values", r), dtype=float) for r in recoveries])
    if stack.shape[0] < 2:
        raise ValueError("AMSE needs at least two recoveries")
    if stack.shape[1:] != truth.shape:
        raise ValueError(f"recovery shape {stack.shape[1:]} does not match truth {truth.shape}")
    return truth, stack


class _Accumulator:
    """Streaming sums behind :func:`amse` and :func:`mse_mean`."""

    def __init__(self, truth: np.ndarray):
        self.truth = truth
        self.total = np.zeros_like(truth)
        self.sq_err = 0.0
        self.count = 0

    def add(self, batch: np.ndarray) -> None:
        self.total += batch.sum(axis=0)
        self.sq_err += float(np.sum((batch - self.truth) ** 2))
        self.count += batch.shape[0]

    def result(self) -> tuple[float, float]:
        mean = self.total / self.count
        return float(np.mean((self.truth - mean) ** 2)), self.sq_err / (self.count * self.truth.size)


@dataclass(frozen=True)
class Cell:
    sigma: float
    bandwidth: float | None
    amse: float
    mse_mean: float
    replicates: int
    seed: int
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_json(self) -> dict:
        out = {
            "sigma": self.sigma,
            "bandwidth": self.bandwidth,
            "amse": None if self.failed else self.amse,
            "mse_mean": None if self.failed else self.mse_mean,
            "replicates": self.replicates,
            "seed": self.seed,
        }
        if self.failed:
            out["error"] = self.error
        return out


@dataclass(frozen=True)
class GridSearchReport:
    detector: Detector
    cells: list[Cell]
    best: Cell
    config: dict = field(repr=False)

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "detector": self.detector.value,
            "cells": [c.to_json() for c in self.cells],
            "best": self.best.to_json(),
        }


def _best_cell(cells: list[Cell]) -> Cell:
    ok = [c for c in cells if not c.failed]
    if not ok:
        raise RuntimeError("every grid cell failed: " + cells[0].error if cells else "empty grid")
    # ties go to the least injected noise, then the narrowest kernel
    return min(ok, key=lambda c: (c.amse, c.sigma, c.bandwidth or 0.0))


def build_signal(cfg: ExperimentConfig) -> Signal1D | Signal2D:
    spec = cfg.signal
    if spec.path is not None:
        image = load_image(spec.path)
        lo, hi = spec.rescale or (-1.0, 1.0)
        return rescale(image, lo, hi)
    if spec.kind == "sincos":
        signal = gen_2d_sincos(spec.n)
    else:
        signal = gen_1d(spec.kind, spec.n)
    if spec.rescale is not None:
        signal = rescale(signal, *spec.rescale)
    return signal


def resolve_thresholds(cfg: ExperimentConfig, signal) -> Thresholds:
    """Configured thresholds, else twice the signal's extremes."""
    if cfg.thresholds is not None:
        return Thresholds(cfg.thresholds.a, cfg.thresholds.b)
    return Thresholds(2.0 * float(signal.values.min()), 2.0 * float(signal.values.max()))


def select_runner(cfg: ExperimentConfig) -> Runner:
    two_d = cfg.signal.is_2d
    if cfg.domain is Domain.DATA:
        return pipeline.recover_2d_data_batch if two_d else pipeline.recover_1d_data_batch
    return pipeline.recover_2d_multiscale_batch if two_d else pipeline.recover_1d_multiscale_batch


def recovery_config(cfg: ExperimentConfig, thresholds: Thresholds, sigma: float, bandwidth, seed: int,
                    *, optimal: bool = False) -> pipeline.RecoveryConfig:
    wavelet = None
    if cfg.wavelet is not None:
        wavelet = pipeline.WaveletSpec(cfg.wavelet.filter, cfg.wavelet.levels)
    return pipeline.RecoveryConfig(
        thresholds=thresholds,
        model=NoiseModel(sigma),
        bandwidth=bandwidth,
        wavelet=wavelet,
        replicates_per_point=cfg.replicates_per_point,
        seed=seed,
        local_neff=cfg.local_neff,
        optimal_weights=optimal,
        noise_scope=cfg.noise_scope,
    )


def resolve_threads(threads: int | None = None) -> int:
    """Explicit count, else ``$SR_DETECT_THREADS``, else the CPU count."""
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        else:
            threads = os.cpu_count() or 1
    if threads < 1:
        raise ValueError("thread count must be >= 1")
    return threads


def _grid_points(cfg: ExperimentConfig) -> list[tuple[float, float | None]]:
    widths = cfg.bandwidth_grid if cfg.bandwidth_grid is not None and not cfg.signal.is_2d else (None,)
    return [(s, w) for s in cfg.sigma_grid for w in widths]


_FIELDS = {Detector.SUB: "theta_a", Detector.SUP: "theta_b", Detector.DOUBLE: "theta", Detector.DOUBLE_OPTIMAL: "theta"}


def _evaluate_cell(cfg, signal, thresholds, runner, index, sigma, bandwidth, detectors):
    """Run every replicate of one cell and score each requested detector."""
    cell_seed = derive_seed(cfg.base_seed, index)
    seeds = [derive_seed(cell_seed, r) for r in range(cfg.replicates)]
    truth = signal.values
    chunk = max(1, BATCH_VALUES // truth.size)
    out = {}
    # the optimal-weight combination needs its own pass; the rest share draws
    groups = {}
    for d in detectors:
        groups.setdefault(d is Detector.DOUBLE_OPTIMAL, []).append(d)
    try:
        for optimal, members in groups.items():
            rcfg = recovery_config(cfg, thresholds, sigma, bandwidth, cell_seed, optimal=optimal)
            acc = {d: _Accumulator(truth) for d in members}
            for start in range(0, len(seeds), chunk):
                batch = runner(signal, rcfg, seeds[start : start + chunk])
                for d in members:
                    acc[d].add(getattr(batch, _FIELDS[d]))
            for d in members:
                a, m = acc[d].result()
                if not (math.isfinite(a) and math.isfinite(m)):
                    raise FloatingPointError("non-finite recovery")
                out[d] = Cell(sigma, bandwidth, a, m, cfg.replicates, cell_seed)
    except (ValueError, ArithmeticError) as exc:
        return {d: Cell(sigma, bandwidth, math.nan, math.nan, cfg.replicates, cell_seed, str(exc)) for d in detectors}
    return out


def grid_search_many(
    cfg: ExperimentConfig,
    detectors: Sequence[Detector],
    *,
    runner: Runner | None = None,
    threads: int | None = None,
    signal=None,
) -> dict[Detector, GridSearchReport]:
    """Grid search scoring several detectors on the same noise draws.

    Each detector's report is identical to what :func:`grid_search` would
    give for it alone, since seeds do not depend on the detector.
    """
    detectors = [Detector(d) for d in dict.fromkeys(detectors)]
    signal = build_signal(cfg) if signal is None else signal
    thresholds = resolve_thresholds(cfg, signal)
    runner = runner or select_runner(cfg)
    points = _grid_points(cfg)

    def work(item):
        index, (sigma, bandwidth) = item
        return _evaluate_cell(cfg, signal, thresholds, runner, index, sigma, bandwidth, detectors)

    workers = min(resolve_threads(threads), len(points))
    if workers == 1:
        results = [work(item) for item in enumerate(points)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, enumerate(points)))

    echo = cfg.echo()
    reports = {}
    for d in detectors:
        cells = [r[d] for r in results]
        reports[d] = GridSearchReport(d, cells, _best_cell(cells), {**echo, "detector": d.value})
    return reports


def grid_search(cfg: ExperimentConfig, *, runner: Runner | None = None, threads: int | None = None,
                signal=None) -> GridSearchReport:
    """Exhaustive (sigma, bandwidth) search for ``cfg.detector``.

    Cells that fail outright are kept in the report with their error and
    excluded from the argmin; if every cell fails a RuntimeError is raised.
    """
    return grid_search_many(cfg, [cfg.detector], runner=runner, threads=threads, signal=signal)[cfg.detector]


@dataclass(frozen=True)
class LevelResult:
    level: int
    sigma: float
    bandwidth: float | None
    amse: float
    report: GridSearchReport = field(repr=False)


def level_sweep(cfg: ExperimentConfig, levels: Sequence[int], *, threads: int | None = None,
                runner: Runner | None = None) -> list[LevelResult]:
    """Repeat the grid search at each decomposition level."""
    if cfg.domain is not Domain.MULTISCALE:
        raise ValueError("level sweep needs the multiscale domain")
    if not levels:
        raise ValueError("level list is empty")
    signal = build_signal(cfg)
    out = []
    for level in levels:
        sub = cfg.model_copy(update={"wavelet": cfg.wavelet.model_copy(update={"levels": int(level)})})
        report = grid_search(sub, threads=threads, runner=runner, signal=signal)
        out.append(LevelResult(int(level), report.best.sigma, report.best.bandwidth, report.best.amse, report))
    return out


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write(path: Path, writer) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer(fh)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None


def _json_dump(payload: dict):
    return lambda fh: (json.dump(payload, fh, indent=2, allow_nan=False), fh.write("\n"))


def _nan_to_none(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def write_cells_csv(path: Path, cells: Sequence[Cell]) -> None:
    def body(fh):
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["sigma", "bandwidth", "amse", "mse_mean"])
        for c in cells:
            w.writerow([repr(c.sigma), "" if c.bandwidth is None else repr(c.bandwidth),
                        "" if c.failed else repr(c.amse), "" if c.failed else repr(c.mse_mean)])

    _write(path, body)


def write_recovered_csv(path: Path, signal: Signal1D, result: pipeline.RecoveryResult) -> None:
    def body(fh):
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["t", "truth", "theta_hat", "theta_a", "theta_b"])
        rows = zip(signal.times, signal.values, result.theta_hat.values,
                   result.theta_a_hat.values, result.theta_b_hat.values)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])

    _write(path, body)


def recover_at(cfg: ExperimentConfig, sigma: float, bandwidth, signal=None) -> pipeline.RecoveryResult:
    """Single seeded recovery (seed = ``base_seed``) at one grid point."""
    signal = build_signal(cfg) if signal is None else signal
    thresholds = resolve_thresholds(cfg, signal)
    rcfg = recovery_config(cfg, thresholds, sigma, bandwidth, cfg.base_seed,
                           optimal=cfg.detector is Detector.DOUBLE_OPTIMAL)
    two_d = cfg.signal.is_2d
    if cfg.domain is Domain.DATA:
        fn = pipeline.recover_2d_data if two_d else pipeline.recover_1d_data
    else:
        fn = pipeline.recover_2d_multiscale if two_d else pipeline.recover_1d_multiscale
    return fn(signal, rcfg)


def run_experiment(cfg: ExperimentConfig, out_dir, *, sweep: bool = False, threads: int | None = None) -> dict:
    """Run a grid search (or level sweep) and write its reports under ``out_dir``.

    Grid search writes ``report.json``, ``report.csv`` and, for 1D signals,
    ``recovered.csv`` at the optimum. A sweep writes ``sweep.json``,
    ``sweep.csv`` and one ``level<L>.csv`` per level. Returns the JSON payload.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from None
    signal = build_signal(cfg)
    if sweep:
        levels = cfg.sweep_levels or tuple(range(1, 6))
        results = level_sweep(cfg, levels, threads=threads)
        payload = {
            "config": cfg.echo(),
            "levels": [
                {"level": r.level, "sigma": r.sigma, "bandwidth": r.bandwidth, "amse": r.amse,
                 "cells": [c.to_json() for c in r.report.cells]}
                for r in results
            ],
            "timestamp": _timestamp(),
        }
        _write(out / "sweep.json", _json_dump(_sanitize(payload)))

        def table(fh):
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(["level", "sigma", "bandwidth", "amse"])
            for r in results:
                w.writerow([r.level, repr(r.sigma), "" if r.bandwidth is None else repr(r.bandwidth), repr(r.amse)])

        _write(out / "sweep.csv", table)
        for r in results:
            write_cells_csv(out / f"level{r.level}.csv", r.report.cells)
        return payload

    report = grid_search(cfg, threads=threads, signal=signal)
    payload = {**report.to_json(), "timestamp": _timestamp()}
    payload["config"] = cfg.echo()
    _write(out / "report.json", _json_dump(_sanitize(payload)))
    write_cells_csv(out / "report.csv", report.cells)
    if isinstance(signal, Signal1D):
        result = recover_at(cfg, report.best.sigma, report.best.bandwidth, signal)
        write_recovered_csv(out / "recovered.csv", signal, result)
    return payload


def _sanitize(obj):
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_sanitize(v) for v in obj]
    return _nan_to_none(obj)
