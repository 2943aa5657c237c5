import csv
import json
import math

import numpy as np
import pytest

from srdetect.config import Detector, parse_config_dict
from srdetect.harness import (
    BATCH_VALUES,
    Cell,
    _best_cell,
    amse,
    grid_search,
    grid_search_many,
    level_sweep,
    mse_mean,
    resolve_threads,
    run_experiment,
)
from srdetect.noise import derive_seed
from srdetect.pipeline import RecoveryBatch


def small_cfg(**over):
    raw = {
        "signal": {"kind": "sine", "n": 64},
        "detector": "double",
        "domain": "data",
        "sigma_grid": [1.5, 2.0],
        "bandwidth_grid": [0.02, 0.05],
        "replicates": 4,
        "base_seed": 9,
    }
    raw.update(over)
    return parse_config_dict(raw)


def test_amse_examples():
    truth = np.array([0.0, 1.0, -2.0])
    assert amse(truth, [truth, truth]) == 0.0
    assert amse(truth, [truth + 0.3, truth + 0.3]) == pytest.approx(0.09, abs=1e-15)
    assert amse(truth, [truth + 1, truth - 1]) == 0.0
    assert mse_mean(truth, [truth + 1, truth - 1]) == 1.0


def test_amse_permutation_invariant():
    rng = np.random.default_rng(0)
    truth = rng.standard_normal(50)
    recs = truth + rng.standard_normal((7, 50))
    assert amse(truth, recs) == pytest.approx(amse(truth, recs[::-1]), rel=1e-14)


def test_amse_errors():
    with pytest.raises(ValueError, match="two"):
        amse(np.zeros(3), [np.zeros(3)])
    with pytest.raises(ValueError, match="shape"):
        amse(np.zeros(3), [np.zeros(4), np.zeros(4)])


def convex_stub(optimum):
    """Even points offset by sigma - optimum and odd points by w - 0.03, so the
    AMSE is the paraboloid ((sigma - optimum)^2 + (w - 0.03)^2) / 2."""

    def runner(signal, rcfg, seeds):
        shift = np.where(np.arange(signal.values.size) % 2 == 0, rcfg.model.sigma - optimum, rcfg.bandwidth - 0.03)
        theta = np.tile(signal.values + shift, (len(seeds), 1))
        return RecoveryBatch(theta, theta, theta)

    return runner


def test_grid_search_finds_analytic_minimum():
    cfg = small_cfg(sigma_grid={"min": 1.0, "max": 3.0, "step": 0.1}, bandwidth_grid=[0.01, 0.03, 0.05])
    report = grid_search(cfg, runner=convex_stub(1.73), threads=1)
    assert report.best.sigma == pytest.approx(1.7)
    assert report.best.bandwidth == 0.03
    assert report.best.amse == pytest.approx(0.03**2 / 2, abs=1e-12)
    assert len(report.cells) == 21 * 3


def test_tie_breaks_to_smaller_sigma_then_width():
    cells = [Cell(2.0, 0.01, 0.1, 0.1, 2, 0), Cell(1.0, 0.05, 0.1, 0.1, 2, 0), Cell(1.0, 0.02, 0.1, 0.1, 2, 0)]
    best = _best_cell(cells)
    assert (best.sigma, best.bandwidth) == (1.0, 0.02)


def test_failed_cells_are_kept_and_skipped():
    def flaky(signal, rcfg, seeds):
        if rcfg.model.sigma < 1.8:
            raise ValueError("boom")
        theta = np.tile(signal.values, (len(seeds), 1))
        return RecoveryBatch(theta, theta, theta)

    report = grid_search(small_cfg(), runner=flaky, threads=1)
    failed = [c for c in report.cells if c.failed]
    assert len(failed) == 2 and all(c.error == "boom" for c in failed)
    assert report.best.sigma == 2.0
    assert failed[0].to_json()["amse"] is None


def test_all_cells_failed_raises():
    def broken(signal, rcfg, seeds):
        raise ValueError("nope")

    with pytest.raises(RuntimeError, match="every grid cell failed"):
        grid_search(small_cfg(), runner=broken, threads=1)


def test_seeding_contract():
    seen = {}

    def spy(signal, rcfg, seeds):
        seen[(rcfg.model.sigma, rcfg.bandwidth)] = (rcfg.seed, list(seeds))
        theta = np.tile(signal.values, (len(seeds), 1))
        return RecoveryBatch(theta, theta, theta)

    report = grid_search(small_cfg(), runner=spy, threads=1)
    for k, cell in enumerate(report.cells):
        cell_seed = derive_seed(9, k)
        assert cell.seed == cell_seed
        assert seen[(cell.sigma, cell.bandwidth)] == (cell_seed, [derive_seed(cell_seed, r) for r in range(4)])
    # sigma-major ordering
    assert [(c.sigma, c.bandwidth) for c in report.cells] == [(1.5, 0.02), (1.5, 0.05), (2.0, 0.02), (2.0, 0.05)]


def test_replicates_are_batched():
    sizes = []

    def spy(signal, rcfg, seeds):
        sizes.append(len(seeds))
        theta = np.tile(signal.values, (len(seeds), 1))
        return RecoveryBatch(theta, theta, theta)

    n = 1 << 14
    cfg = small_cfg(signal={"kind": "sine", "n": n}, sigma_grid=[2.0], bandwidth_grid=[0.1], replicates=40)
    grid_search(cfg, runner=spy, threads=1)
    assert sizes == [BATCH_VALUES // n] * 2 + [40 - 2 * (BATCH_VALUES // n)]


@pytest.mark.parametrize("threads", [2, 4, 8])
def test_thread_count_does_not_change_report(threads):
    cfg = small_cfg()
    ref = grid_search(cfg, threads=1).to_json()
    assert grid_search(cfg, threads=threads).to_json() == ref


def test_many_matches_single_detector_runs():
    cfg = small_cfg()
    many = grid_search_many(cfg, ["sub", "sup", "double", "double-optimal"], threads=1)
    for d in Detector:
        single = grid_search(cfg.model_copy(update={"detector": d}), threads=1)
        assert [c.amse for c in many[d].cells] == [c.amse for c in single.cells]


def test_real_grid_search_shape():
    report = grid_search(small_cfg(), threads=1)
    assert len(report.cells) == 4
    assert all(math.isfinite(c.amse) and c.mse_mean >= c.amse for c in report.cells)
    assert report.best.amse == min(c.amse for c in report.cells)


def test_resolve_threads(monkeypatch):
    monkeypatch.setenv("SR_DETECT_THREADS", "3")
    assert resolve_threads() == 3
    assert resolve_threads(5) == 5
    monkeypatch.setenv("SR_DETECT_THREADS", "many")
    with pytest.raises(ValueError):
        resolve_threads()
    with pytest.raises(ValueError):
        resolve_threads(0)


def test_level_sweep_requires_multiscale():
    with pytest.raises(ValueError, match="multiscale"):
        level_sweep(small_cfg(), [1, 2])


def test_level_sweep_runs_each_level():
    cfg = small_cfg(domain="multiscale", wavelet={"filter": "haar", "levels": 1}, noise_scope="scaling")
    results = level_sweep(cfg, [1, 2], threads=1)
    assert [r.level for r in results] == [1, 2]
    assert all(r.report.config["wavelet"]["levels"] == r.level for r in results)


def _strip(payload):
    return {k: v for k, v in payload.items() if k != "timestamp"}


def test_run_experiment_outputs(tmp_path):
    cfg = small_cfg()
    payload = run_experiment(cfg, tmp_path / "a", threads=1)
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert set(report) == {"config", "detector", "cells", "best", "timestamp"}
    assert set(report["cells"][0]) >= {"sigma", "bandwidth", "amse", "mse_mean", "seed"}
    assert len(report["cells"]) == 4
    with open(tmp_path / "a" / "report.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["sigma", "bandwidth", "amse", "mse_mean"] and len(rows) == 5
    assert (tmp_path / "a" / "report.csv").read_bytes().count(b"\r\n") == 5
    with open(tmp_path / "a" / "recovered.csv", newline="") as fh:
        assert next(csv.reader(fh)) == ["t", "truth", "theta_hat", "theta_a", "theta_b"]
    # rerun is byte-identical apart from the timestamp
    again = run_experiment(cfg, tmp_path / "b", threads=3)
    assert _strip(json.loads(json.dumps(payload))) == _strip(json.loads(json.dumps(again)))
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()


def test_run_experiment_sweep_outputs(tmp_path):
    cfg = small_cfg(domain="multiscale", wavelet={"filter": "haar", "levels": 1}, sweep_levels=[1, 2])
    run_experiment(cfg, tmp_path, sweep=True, threads=1)
    sweep = json.loads((tmp_path / "sweep.json").read_text())
    assert [lv["level"] for lv in sweep["levels"]] == [1, 2]
    assert (tmp_path / "level2.csv").exists() and (tmp_path / "sweep.csv").exists()
