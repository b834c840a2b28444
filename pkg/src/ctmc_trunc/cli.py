"""Command-line front end: presets in, files out, one summary line per run.

Configuration is a single declarative JSON file plus flag overrides (flags
win).  Every run writes `effective_config.json` with all defaults
materialized and the code version, so re-running from that file reproduces
the outputs bit for bit (given the same seed).

Exit codes: 0 success; 2 configuration or usage error; 3 numeric failure;
4 inconclusive verdict under --strict.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ConfigError,
    CtmcTruncError,
    DimensionTooLarge,
    GeneratorInvariantError,
    InvalidNetworkError,
    MissingReverseEdge,
    NotConnected,
    SingularBeyondKernel,
    ZeroMassWindow,
)
from .evolution import ProbVec, evolve, long_time_limit
from .generator import truncate_subnetwork
from .limits import (
    SEQUENCE_KINDS,
    p0_evaluator,
    spectral_gap,
    thermodynamic_sweep,
)
from .network import FiniteSubset, format_label, parse_label
from .presets import PRESET_FACTORIES, Preset, build_preset
from .simulate import simulate_return, stationary_from_simulation
from .stationary import (
    detailed_balance_candidate,
    in_tree_oracle,
    kolmogorov_check,
    stationary_kernel,
)

USAGE_ERRORS = (
    ConfigError,
    InvalidNetworkError,
    MissingReverseEdge,
    NotConnected,
    DimensionTooLarge,
    ZeroMassWindow,
    ValueError,
)
NUMERIC_ERRORS = (SingularBeyondKernel, GeneratorInvariantError)

DEFAULTS: dict = {
    "command": None,
    "preset": {"name": None, "params": {}},
    "output_dir": "out",
    "format": "csv",
    "threads": None,
    "strict": False,
    "seed": 1,
    "evolve": {
        "t": [1.0],
        "tol": 1e-12,
        "window_n": 8,
        "window": None,
        "p0": "geometric:0.5",
    },
    "stationary": {
        "method": "kernel",
        "window_n": 8,
        "window": None,
        "root": None,
        "p0": "geometric:0.5",
    },
    "sweep": {
        "sequence": "balls",
        "n_max": 16,
        "t_grid": [0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
        "p0": "geometric:0.5",
        "leak_trajectories": 500,
        "leak_horizon": None,
    },
    "simulate": {
        "mode": "return",
        "n": 1000,
        "horizon": 100.0,
        "start": None,
        "total_time": 1000.0,
        "events_log": None,
    },
    "check_db": {"window_n": 8, "window": None},
    "spectrum": {"window_n": 8, "window": None},
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = dict(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict) and key != "params" and isinstance(value, dict):
            out[key] = _merge(base[key], value, path + key + ".")
        else:
            out[key] = value
    return out


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [_fmt(v) if isinstance(v, float) else v for v in row]
            )


def _write_vector_csv(path: Path, vec: ProbVec) -> None:
    rows = []
    for i, (lbl, v) in enumerate(zip(vec.subset.members, vec.values)):
        rows.append([i, format_label(lbl), float(v)])
    if len(vec.values) == len(vec.subset) + 1:
        rows.append([len(vec.subset), "remainder", float(vec.values[-1])])
    _write_csv(path, ["index", "label", "value"], rows)


def _resolve_window(preset: Preset, section: dict) -> FiniteSubset:
    if section.get("window"):
        labels = [parse_label(tok) for tok in str(section["window"]).split(",")]
        return FiniteSubset(labels)
    return preset.network.window(int(section["window_n"]))


def _resolve_threads(cfg: dict) -> int:
    env = os.environ.get("CTMC_TRUNC_THREADS")
    if env is not None:
        return max(1, int(env))
    if cfg.get("threads") is not None:
        return max(1, int(cfg["threads"]))
    return os.cpu_count() or 1


def _emit_effective(cfg: dict, outdir: Path) -> None:
    payload = dict(cfg)
    payload["code_version"] = __version__
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "effective_config.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_evolve(cfg: dict, preset: Preset, outdir: Path) -> int:
    sec = cfg["evolve"]
    f = _resolve_window(preset, sec)
    g = truncate_subnetwork(preset.network, f)
    p0 = ProbVec.from_evaluator(f, p0_evaluator(sec["p0"]))
    results = []
    for t in sec["t"]:
        report = evolve(g, p0, float(t), float(sec["tol"]))
        results.append((t, report))
        _write_vector_csv(outdir / f"evolve_t{t}.csv", report.result)
    payload = [
        {
            "t": t,
            "result": [float(v) for v in rep.result.values],
            "terms_used": rep.terms_used,
            "mass_drift": rep.mass_drift,
            "wall_time": rep.wall_time,
        }
        for t, rep in results
    ]
    with open(outdir / "evolve_result.json", "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    last = results[-1][1]
    print(
        f"evolve: {len(results)} time point(s), window={len(f)}, "
        f"terms={last.terms_used}, mass_drift={last.mass_drift:.3g}"
    )
    return 0


def cmd_stationary(cfg: dict, preset: Preset, outdir: Path) -> int:
    sec = cfg["stationary"]
    f = _resolve_window(preset, sec)
    method = sec["method"]
    if method == "kernel":
        res = stationary_kernel(truncate_subnetwork(preset.network, f))
    elif method == "db":
        root = parse_label(sec["root"]) if sec.get("root") else None
        res = detailed_balance_candidate(preset.network, f, root)
    elif method == "tree":
        res = in_tree_oracle(truncate_subnetwork(preset.network, f))
    elif method == "longtime":
        g = truncate_subnetwork(preset.network, f)
        p0 = ProbVec.from_evaluator(f, p0_evaluator(sec["p0"]))
        vec, converged, _ = long_time_limit(g, p0)
        if not converged:
            print("stationary: long-time evolution did not converge", file=sys.stderr)
            return 3
        from .stationary import StationaryResult

        residual = float(np.abs(g.matrix @ vec.values).sum())
        res = StationaryResult(vec, 1, residual, "LongTimeLimit")
    else:
        raise ConfigError(f"unknown stationary method {method!r}")
    with open(outdir / "stationary.json", "w") as fh:
        json.dump(res.to_jsonable(), fh, indent=2)
        fh.write("\n")
    _write_vector_csv(outdir / "stationary.csv", res.vector)
    shown = ", ".join(
        f"{format_label(m)}={v:.6g}"
        for m, v in zip(res.vector.subset.members, res.vector.values)
    )
    print(
        f"stationary[{res.method}]: kernel_dim={res.kernel_dim}, "
        f"residual={res.residual:.3g}, ({shown})"
    )
    return 0


def cmd_sweep(cfg: dict, preset: Preset, outdir: Path) -> int:
    sec = cfg["sweep"]
    report = thermodynamic_sweep(
        preset,
        sequence_kind=sec["sequence"],
        n_max=int(sec["n_max"]),
        t_grid=[float(t) for t in sec["t_grid"]],
        p0_rule=sec["p0"],
        threads=_resolve_threads(cfg),
        leak_trajectories=int(sec["leak_trajectories"]),
        leak_horizon=sec["leak_horizon"],
        leak_seed=int(cfg["seed"]),
    )
    stem = f"{preset.name}_{sec['sequence']}"
    t_header = ["window_pair"] + [f"t={_fmt(t)}" for t in report.t_grid]
    _write_csv(
        outdir / f"{stem}_evolve.csv",
        t_header,
        [
            [f"{i + 1}->{i + 2}"] + [float(v) for v in row]
            for i, row in enumerate(report.evolve_diffs)
        ],
    )
    _write_csv(
        outdir / f"{stem}_bound.csv",
        t_header,
        [
            [f"{i + 1}->{i + 2}"] + [float(v) for v in row]
            for i, row in enumerate(report.groenwall_bounds)
        ],
    )
    _write_csv(
        outdir / f"{stem}_stat.csv",
        ["window_pair", "stationary_diff", "spectral_gap_small_window"],
        [
            [f"{i + 1}->{i + 2}", float(d), float(report.spectral_gaps[i])]
            for i, d in enumerate(report.stationary_diffs)
        ],
    )
    with open(outdir / f"{stem}_verdict.json", "w") as fh:
        json.dump(report.verdict.to_jsonable(), fh, indent=2)
        fh.write("\n")
    print(
        f"sweep: {preset.name}/{sec['sequence']}, windows={report.window_sizes[-1]}, "
        f"verdict=case ({report.verdict.case}), leak={report.leak_fraction:.3g}"
    )
    if cfg["strict"] and report.verdict.case == "inconclusive":
        print("sweep verdict inconclusive (strict mode)", file=sys.stderr)
        return 4
    return 0


def cmd_simulate(cfg: dict, preset: Preset, outdir: Path) -> int:
    sec = cfg["simulate"]
    start = parse_label(sec["start"]) if sec.get("start") else preset.default_root
    if sec["mode"] == "return":
        stats = simulate_return(
            preset.network,
            start,
            float(sec["horizon"]),
            int(sec["n"]),
            int(cfg["seed"]),
            events_path=sec["events_log"],
        )
        with open(outdir / "simulate.json", "w") as fh:
            json.dump(stats.to_jsonable(), fh, indent=2)
            fh.write("\n")
        print(
            f"simulate: n={stats.n_trajectories}, returned={stats.returned_count}, "
            f"absorbed={stats.absorbed_count}, "
            f"mean_t_R={stats.return_time_mean:.6g}"
        )
    elif sec["mode"] == "occupation":
        est = stationary_from_simulation(
            preset.network, start, float(sec["total_time"]), int(cfg["seed"])
        )
        with open(outdir / "simulate.json", "w") as fh:
            json.dump(est.to_jsonable(), fh, indent=2)
            fh.write("\n")
        print(
            f"simulate: occupation over {est.elapsed:.6g} time units, "
            f"{est.n_events} events, converged={est.converged}"
        )
    else:
        raise ConfigError(f"unknown simulate mode {sec['mode']!r}")
    return 0


def cmd_check_db(cfg: dict, preset: Preset, outdir: Path) -> int:
    sec = cfg["check_db"]
    f = _resolve_window(preset, sec)
    cert = kolmogorov_check(preset.network, f)
    payload = {
        "holds": cert.holds,
        "max_cycle_ratio_error": cert.max_cycle_ratio_error,
        "witness_cycle": [format_label(s) for s in cert.witness_cycle]
        if cert.witness_cycle
        else None,
    }
    with open(outdir / "checkdb.json", "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    print(f"check-db: holds={'true' if cert.holds else 'false'}, "
          f"max_cycle_ratio_error={cert.max_cycle_ratio_error:.3g}")
    return 0


def cmd_spectrum(cfg: dict, preset: Preset, outdir: Path) -> int:
    sec = cfg["spectrum"]
    f = _resolve_window(preset, sec)
    g = truncate_subnetwork(preset.network, f)
    gap = spectral_gap(g)
    eig = np.sort_complex(np.linalg.eigvals(g.dense()))
    _write_csv(
        outdir / "spectrum.csv",
        ["re", "im"],
        [[float(ev.real), float(ev.imag)] for ev in eig],
    )
    with open(outdir / "spectrum.json", "w") as fh:
        json.dump({"spectral_gap": gap, "n": g.dim}, fh, indent=2)
        fh.write("\n")
    print(f"spectrum: n={g.dim}, gap={gap:.6g}")
    return 0


def cmd_list_presets(cfg: dict) -> int:
    import inspect

    for name in sorted(PRESET_FACTORIES):
        sig = inspect.signature(PRESET_FACTORIES[name])
        params = ", ".join(
            f"{p.name}={p.default!r}" for p in sig.parameters.values()
        )
        print(f"{name}({params})")
    return 0


def _parse_params(tokens: list[str]) -> dict:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise ConfigError(f"--param expects key=value, got {tok!r}")
        key, _, value = tok.partition("=")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctmc-trunc",
        description="Finite-truncation analysis of countable master equations",
    )
    parser.add_argument("--config", help="JSON config file (flags override it)")
    parser.add_argument("--output-dir", dest="output_dir")
    parser.add_argument("--format", choices=["csv", "json"])
    parser.add_argument("--threads", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--strict", action="store_true", default=None)
    sub = parser.add_subparsers(dest="command")

    def add_preset_args(p):
        p.add_argument("--preset")
        p.add_argument("--param", action="append", default=None,
                       help="preset parameter key=value (repeatable)")

    p = sub.add_parser("evolve", help="evolve a window in time")
    add_preset_args(p)
    p.add_argument("--window-n", type=int, dest="window_n")
    p.add_argument("--window")
    p.add_argument("--t", help="comma-separated times")
    p.add_argument("--tol", type=float)
    p.add_argument("--p0")

    p = sub.add_parser("stationary", help="stationary state of a window")
    add_preset_args(p)
    p.add_argument("--window-n", type=int, dest="window_n")
    p.add_argument("--window")
    p.add_argument("--method", choices=["kernel", "db", "tree", "longtime"])
    p.add_argument("--root")
    p.add_argument("--p0")

    p = sub.add_parser("sweep", help="thermodynamic-limit sweep")
    add_preset_args(p)
    p.add_argument("--sequence", choices=list(SEQUENCE_KINDS))
    p.add_argument("--n-max", type=int, dest="n_max")
    p.add_argument("--t-grid", dest="t_grid", help="comma-separated times")
    p.add_argument("--p0")
    p.add_argument("--leak-trajectories", type=int, dest="leak_trajectories")
    p.add_argument("--leak-horizon", type=float, dest="leak_horizon")

    p = sub.add_parser("simulate", help="Monte-Carlo trajectories")
    add_preset_args(p)
    p.add_argument("--mode", choices=["return", "occupation"])
    p.add_argument("--n", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--start")
    p.add_argument("--total-time", type=float, dest="total_time")
    p.add_argument("--events-log", dest="events_log")

    p = sub.add_parser("check-db", help="Kolmogorov cycle criterion")
    add_preset_args(p)
    p.add_argument("--window-n", type=int, dest="window_n")
    p.add_argument("--window")

    p = sub.add_parser("spectrum", help="eigenvalues and spectral gap")
    add_preset_args(p)
    p.add_argument("--window-n", type=int, dest="window_n")
    p.add_argument("--window")

    sub.add_parser("list-presets", help="print available presets")
    return parser


_SECTION_KEYS = {
    "evolve": ["window_n", "window", "tol", "p0"],
    "stationary": ["window_n", "window", "method", "root", "p0"],
    "sweep": ["sequence", "n_max", "p0", "leak_trajectories", "leak_horizon"],
    "simulate": ["mode", "n", "horizon", "start", "total_time", "events_log"],
    "check-db": ["window_n", "window"],
    "spectrum": ["window_n", "window"],
}


def _config_from_args(args: argparse.Namespace) -> dict:
    cfg = DEFAULTS
    if args.config:
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        file_cfg.pop("code_version", None)
        cfg = _merge(cfg, file_cfg)
    overrides: dict = {}
    if args.command:
        overrides["command"] = args.command
    for key in ("output_dir", "format", "threads", "seed", "strict"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "preset", None):
        overrides.setdefault("preset", {})["name"] = args.preset
    if getattr(args, "param", None):
        overrides.setdefault("preset", {}).setdefault("params", {}).update(
            _parse_params(args.param)
        )
    section = _SECTION_KEYS.get(args.command or "", [])
    sec_key = (args.command or "").replace("-", "_")
    for key in section:
        value = getattr(args, key, None)
        if value is not None:
            overrides.setdefault(sec_key, {})[key] = value
    if getattr(args, "t", None) is not None:
        overrides.setdefault("evolve", {})["t"] = [
            float(tok) for tok in args.t.split(",")
        ]
    if getattr(args, "t_grid", None) is not None:
        overrides.setdefault("sweep", {})["t_grid"] = [
            float(tok) for tok in args.t_grid.split(",")
        ]
    return _merge(cfg, overrides)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 2
    try:
        cfg = _config_from_args(args)
    except (ConfigError, json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command == "list-presets":
        return cmd_list_presets(cfg)
    try:
        if not cfg["preset"]["name"]:
            raise ConfigError("no preset given (use --preset or config file)")
        preset = build_preset(cfg["preset"]["name"], cfg["preset"]["params"])
        outdir = Path(cfg["output_dir"])
        outdir.mkdir(parents=True, exist_ok=True)
        _emit_effective(cfg, outdir)
        handler = {
            "evolve": cmd_evolve,
            "stationary": cmd_stationary,
            "sweep": cmd_sweep,
            "simulate": cmd_simulate,
            "check-db": cmd_check_db,
            "spectrum": cmd_spectrum,
        }[args.command]
        return handler(cfg, preset, outdir)
    except USAGE_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
