"""``srdetect`` command line.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import fisher, harness
from .config import (
    GRID_STEP,
    SINCOS,
    ConfigError,
    ExperimentConfig,
    SIGMA_RANGES,
    parse_config_dict,
)
from .signals import Kind, Signal1D, gen_1d, gen_2d_sincos
from .wavelet import FilterName, WaveletCoeffs, dwt_1d, filter_coeffs, idwt_1d

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this taxonomy reserves 2 for runtime."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _range(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected min:max:step, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected min:max:step, got {text!r}") from None


def _experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment config; flags override its values")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--seed", type=int, help="base seed (64-bit)")
    p.add_argument("--kind", help="signal kind: " + ", ".join(k.value for k in Kind) + f", {SINCOS}")
    p.add_argument("--n", type=int, help="signal length (image side for sincos)")
    p.add_argument("--sigma-min", type=float)
    p.add_argument("--sigma-max", type=float)
    p.add_argument("--sigma-step", type=float)
    p.add_argument("--bandwidth-grid", type=_float_list, help="comma-separated kernel bandwidths")
    p.add_argument("--detector", choices=["sub", "sup", "double", "double-optimal"])
    p.add_argument("--domain", choices=["data", "multiscale"])
    p.add_argument("--filter", choices=[f.value for f in FilterName])
    p.add_argument("--replicates", type=int)
    p.add_argument("--noise-scope", choices=["all", "scaling"], help="multiscale: noise on all coefficients or scaling only")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="srdetect", description="Sub-threshold signal recovery with threshold detectors.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a test signal as CSV")
    g.add_argument("--kind", required=True, help="signal kind: " + ", ".join(k.value for k in Kind) + f", {SINCOS}")
    g.add_argument("--n", type=int, required=True, help="length (image side for sincos)")
    g.add_argument("--out", type=Path, required=True, help="output CSV file")

    r = sub.add_parser("recover", help="one seeded recovery at a fixed sigma (and bandwidth)")
    _experiment_flags(r)
    r.add_argument("--levels", type=int, help="wavelet decomposition levels")
    r.add_argument("--sigma", type=float, required=True)
    r.add_argument("--bandwidth", type=float, help="kernel bandwidth (1D)")

    gs = sub.add_parser("grid-search", help="AMSE grid search over sigma and bandwidth")
    _experiment_flags(gs)
    gs.add_argument("--levels", type=int, help="wavelet decomposition levels")

    ls = sub.add_parser("level-sweep", help="grid search repeated per decomposition level")
    _experiment_flags(ls)
    ls.add_argument("--levels", type=_int_list, help="comma-separated levels (default 1,2,3,4,5)")

    f = sub.add_parser("fisher", help="Fisher-information surface as CSV")
    f.add_argument("--mode", required=True, choices=[p.value for p in fisher.Plane])
    f.add_argument("--theta", type=float, help="signal level (threshold-plane)")
    f.add_argument("--sigma", type=float, help="noise level (threshold-plane)")
    f.add_argument("--a", type=float, help="lower threshold (theta-sigma-plane)")
    f.add_argument("--b", type=float, help="upper threshold (theta-sigma-plane)")
    f.add_argument("--axis1", type=_range, help="min:max:step for a (or theta)")
    f.add_argument("--axis2", type=_range, help="min:max:step for b (or sigma)")
    f.add_argument("--out", type=Path, required=True, help="output CSV file")

    d = sub.add_parser("dwt", help="forward or inverse 1D wavelet transform of a CSV signal")
    d.add_argument("--in", dest="input", type=Path, required=True, help="input CSV (t,value or index,band,coefficient)")
    d.add_argument("--filter", choices=[f.value for f in FilterName], default="symmlet8")
    d.add_argument("--levels", type=int, default=3, help="decomposition levels (forward only; inverse reads them from the bands)")
    d.add_argument("--inverse", action="store_true", help="input holds coefficients; write the signal")
    d.add_argument("--out", type=Path, required=True, help="output CSV file")
    return parser


def _read_json(path: Path) -> dict:
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return raw


def resolve_config(args, domain: str | None = None) -> ExperimentConfig:
    """Config file (if any) overlaid with command-line flags.

    ``domain`` forces the domain (the level sweep is multiscale only).
    """
    raw = _read_json(args.config) if args.config else {}
    raw.setdefault("signal", {"kind": "sine", "n": 1024})
    raw.setdefault("detector", "double")
    raw.setdefault("domain", "data")
    if args.kind is not None or args.n is not None:
        signal = dict(raw["signal"])
        if args.kind is not None:
            signal.pop("path", None)
            signal["kind"] = args.kind
        if args.n is not None:
            signal["n"] = args.n
        raw["signal"] = signal
    for flag, key in (("detector", "detector"), ("domain", "domain"), ("seed", "base_seed"),
                      ("replicates", "replicates"), ("noise_scope", "noise_scope"),
                      ("bandwidth_grid", "bandwidth_grid")):
        value = getattr(args, flag)
        if value is not None:
            raw[key] = value
    bounds = (args.sigma_min, args.sigma_max, args.sigma_step)
    if any(v is not None for v in bounds):
        two_d = raw["signal"].get("path") is not None or raw["signal"].get("kind") == SINCOS
        lo, hi = SIGMA_RANGES.get((str(raw["domain"]), two_d), (1.0, 5.0))
        current = raw.get("sigma_grid") if isinstance(raw.get("sigma_grid"), dict) else {}
        raw["sigma_grid"] = {
            "min": bounds[0] if bounds[0] is not None else current.get("min", lo),
            "max": bounds[1] if bounds[1] is not None else current.get("max", hi),
            "step": bounds[2] if bounds[2] is not None else current.get("step", GRID_STEP),
        }
    levels = getattr(args, "levels", None)
    if args.filter is not None or isinstance(levels, int):
        wavelet = dict(raw.get("wavelet") or {})
        if args.filter is not None:
            wavelet["filter"] = args.filter
        if isinstance(levels, int):
            wavelet["levels"] = levels
        raw["wavelet"] = wavelet
    if isinstance(levels, list):
        raw["sweep_levels"] = levels
    if domain is not None:
        raw["domain"] = domain
    return parse_config_dict(raw)


def _ensure_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc.strerror}") from None
    return path


def _echo(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _sidecar(out: Path) -> Path:
    return out.with_name(out.stem + ".config.json")


def _write_matrix(path: Path, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        for row in values:
            w.writerow([repr(float(v)) for v in row])


def cmd_gen(args) -> None:
    if args.kind == SINCOS:
        _write_matrix(args.out, gen_2d_sincos(args.n).values)
    else:
        signal = gen_1d(args.kind, args.n)
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(["t", "value"])
            for t, v in zip(signal.times, signal.values):
                w.writerow([repr(float(t)), repr(float(v))])
    _echo(_sidecar(args.out), {"command": "gen", "kind": args.kind, "n": args.n})


def cmd_recover(args) -> None:
    cfg = resolve_config(args)
    out = _ensure_dir(args.out)
    signal = harness.build_signal(cfg)
    bandwidth = None if cfg.signal.is_2d else args.bandwidth
    if bandwidth is None and not cfg.signal.is_2d:
        raise UsageError("1D recovery needs --bandwidth")
    result = harness.recover_at(cfg, args.sigma, bandwidth, signal)
    if isinstance(signal, Signal1D):
        harness.write_recovered_csv(out / "recovered.csv", signal, result)
    else:
        _write_matrix(out / "theta_hat.csv", result.theta_hat.values)
    _echo(out / "config.json", {**cfg.echo(), "sigma": args.sigma, "bandwidth": bandwidth})


def cmd_grid_search(args) -> None:
    cfg = resolve_config(args)
    out = _ensure_dir(args.out)
    _echo(out / "config.json", cfg.echo())
    harness.run_experiment(cfg, out)


def cmd_level_sweep(args) -> None:
    cfg = resolve_config(args, domain="multiscale")
    out = _ensure_dir(args.out)
    _echo(out / "config.json", cfg.echo())
    harness.run_experiment(cfg, out, sweep=True)


def cmd_fisher(args) -> None:
    plane = fisher.Plane(args.mode)
    if plane is fisher.Plane.THRESHOLD:
        if args.theta is None or args.sigma is None:
            raise UsageError("threshold-plane needs --theta and --sigma")
        t, s = args.theta, args.sigma
        ax1 = args.axis1 or (t - 2 * s, t, 0.01 * s)
        ax2 = args.axis2 or (t, t + 2 * s, 0.01 * s)
        kwargs = {"theta": t, "sigma": s}
    else:
        if args.a is None or args.b is None:
            raise UsageError("theta-sigma-plane needs --a and --b")
        ax1 = args.axis1 or (args.a - 1.0, args.b + 1.0, 0.01)
        ax2 = args.axis2 or (0.1, 3.0, 0.01)
        kwargs = {"a": args.a, "b": args.b}
    surface = fisher.fi_surface(plane, fisher.grid_axis(*ax1), fisher.grid_axis(*ax2), **kwargs)
    surface.to_csv(args.out)
    x, y, v = surface.argmax()
    _echo(_sidecar(args.out), {"command": "fisher", "mode": plane.value, **kwargs,
                               "axis1": list(ax1), "axis2": list(ax2), "max": {"axis1": x, "axis2": y, "value": v}})


def _read_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from None
    if len(rows) < 2:
        raise ValueError(f"{path}: expected a header and at least one row")
    return [h.strip() for h in rows[0]], rows[1:]


def _column(rows, index: int, path: Path) -> np.ndarray:
    try:
        return np.array([float(r[index]) for r in rows])
    except (ValueError, IndexError):
        raise ValueError(f"{path}: missing or non-numeric entry in column {index + 1}") from None


def cmd_dwt(args) -> None:
    header, rows = _read_rows(args.input)
    filt = filter_coeffs(args.filter)
    if args.inverse:
        if header[:3] != ["index", "band", "coefficient"]:
            raise ValueError("inverse transform expects columns index,band,coefficient")
        data = _column(rows, 2, args.input)
        # one scaling band plus one detail band per level
        levels = len(dict.fromkeys(r[1] for r in rows)) - 1
        values = idwt_1d(WaveletCoeffs(data, data.size, levels, filt))
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(["index", "value"])
            for i, v in enumerate(values):
                w.writerow([i, repr(float(v))])
    else:
        levels = args.levels
        col = header.index("value") if "value" in header else len(header) - 1
        coeffs = dwt_1d(_column(rows, col, args.input), filt, levels)
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(["index", "band", "coefficient"])
            i = 0
            for name, sl in coeffs.level_slices():
                for v in coeffs.data[sl]:
                    w.writerow([i, name, repr(float(v))])
                    i += 1
    _echo(_sidecar(args.out), {"command": "dwt", "filter": filt.name.value, "levels": levels,
                               "inverse": args.inverse, "input": str(args.input)})


_COMMANDS = {
    "gen": cmd_gen,
    "recover": cmd_recover,
    "grid-search": cmd_grid_search,
    "level-sweep": cmd_level_sweep,
    "fisher": cmd_fisher,
    "dwt": cmd_dwt,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"srdetect {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError, ArithmeticError, OSError) as exc:
        print(f"srdetect {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
