"""Command-line driver: designs, evaluations and the reference experiments.

Exit status: 0 success, 2 invalid configuration or arguments, 3 solver
failure, 4 missing or mismatched input artifacts.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .annular import AnnularSet, DmdsdrConfig, MonotonicityError, design_annular
from .conic import SolverFailure
from .evaluation import antenna_pattern, default_grid, sample_annular, sample_spherical, sinr
from .results import DesignResult, to_db
from .scenario import (ArrayGeometry, ConfigError, PathSpec, ScenarioConfig, SignalModel,
                       reference_annular_scenario, reference_spherical_scenario)
from .spherical import DmsdrConfig, SphericalSet, design_spherical

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INPUT = 0, 2, 3, 4

EXPERIMENTS = ("fig3", "fig4", "fig5", "fig6", "fig7", "fig8")

REFERENCE_CENTER = np.array([0.8, 0.6 * np.exp(1j * math.pi / 3), 0.2 * np.exp(-1j * math.pi / 6)])
RADII = tuple(round(0.1 * k, 1) for k in range(1, 10))
FIG7_SETS = ((2, 1, 0.5, 2), (2, 0.5, 1, 2), (1, 1, 0.5, 2), (2, 1, 0.5, 1))
FIG8_SETS = ((2, 1, 0.5, 2), (1, 2, 0.5, 2), (0.5, 1, 2, 2))


class InputError(RuntimeError):
    """A result file is missing or does not belong to the given configuration."""


class _Log:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, msg: str) -> None:
        if not self.quiet:
            print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# Configuration documents
# ---------------------------------------------------------------------------

def _complex_entry(v) -> complex:
    if isinstance(v, dict):
        return float(v["abs"]) * np.exp(1j * math.radians(float(v.get("phase_deg", 0.0))))
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(float(v))
    raise ConfigError(f"cannot read complex number from {v!r}")


def _algorithm_config(cls, doc: dict, overrides: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"unknown algorithm keys: {sorted(unknown)}")
    kw = dict(doc)
    kw.update({k: v for k, v in overrides.items() if v is not None and k in names})
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_design_config(path, seed=None, tol=None, trials=None):
    """Read a design document; returns (scenario, uncertainty set, algorithm config)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(doc, dict) or "scenario" not in doc or "uncertainty" not in doc:
        raise ConfigError("config must contain 'scenario' and 'uncertainty' objects")
    scenario = ScenarioConfig.from_dict(doc["scenario"])
    unc = doc["uncertainty"]
    overrides = {"rng_seed": seed, "sdp_tolerance": tol, "randomization_trials": trials}
    algo = doc.get("algorithm", {}) or {}
    try:
        kind = unc["kind"]
        if kind == "spherical":
            center = np.array([_complex_entry(v) for v in unc["center"]])
            uset = SphericalSet(center, float(unc["radius"]))
            cfg = _algorithm_config(DmsdrConfig, algo, overrides)
            dim = uset.dim
        elif kind == "annular":
            uset = AnnularSet(np.asarray(unc["lower"], float), np.asarray(unc["upper"], float))
            cfg = _algorithm_config(DmdsdrConfig, algo, overrides)
            dim = uset.dim
        else:
            raise ConfigError(f"unknown uncertainty kind {kind!r}")
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid uncertainty document: {exc!r}") from exc
    if dim != scenario.num_paths:
        raise ConfigError(f"uncertainty set has {dim} entries, scenario has {scenario.num_paths} paths")
    return scenario, uset, cfg


def spherical_document(scenario: ScenarioConfig, center, radius, algorithm: dict | None = None) -> dict:
    return {
        "scenario": scenario.to_dict(),
        "uncertainty": {"kind": "spherical",
                        "center": [[float(z.real), float(z.imag)] for z in np.asarray(center, complex)],
                        "radius": float(radius)},
        "algorithm": algorithm or {},
    }


def annular_document(scenario: ScenarioConfig, lower, upper, algorithm: dict | None = None) -> dict:
    return {
        "scenario": scenario.to_dict(),
        "uncertainty": {"kind": "annular", "lower": [float(x) for x in lower],
                        "upper": [float(x) for x in upper]},
        "algorithm": algorithm or {},
    }


# ---------------------------------------------------------------------------
# Atomic output
# ---------------------------------------------------------------------------

def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: Path, doc) -> None:
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _hash_doc(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _manifest(path: Path, *, config_hash, seed, algorithm, tolerances, started, outputs) -> None:
    _write_json(path, {
        "tool": "robustwf",
        "version": __version__,
        "config_hash": config_hash,
        "rng_seed": seed,
        "algorithm": algorithm,
        "tolerances": tolerances,
        "wall_time_s": round(time.perf_counter() - started, 6),
        "outputs": [str(p) for p in outputs],
    })


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _tolerances(cfg) -> dict:
    keys = ("sdp_tolerance", "dual_tolerance", "relative_gap", "rank_one_ratio")
    return {k: getattr(cfg, k) for k in keys if hasattr(cfg, k)}


# ---------------------------------------------------------------------------
# Designs and evaluations
# ---------------------------------------------------------------------------

def run_design(scenario, uset, cfg) -> DesignResult:
    if isinstance(uset, SphericalSet):
        return design_spherical(scenario, uset, cfg)
    return design_annular(scenario, uset, cfg)


def _sample(uset, count, seed):
    if isinstance(uset, SphericalSet):
        return sample_spherical(uset, count, seed)
    return sample_annular(uset, count, seed)


SAMPLE_HEADER = ("index", "sinr", "sinr_db", "worst_case_sinr", "worst_case_sinr_db", "dominates")


def sample_rows(result: DesignResult, scenario, uset, count: int, seed: int):
    model = scenario if isinstance(scenario, SignalModel) else SignalModel(scenario)
    worst = result.worst_case_sinr
    rows = []
    for i, u in enumerate(_sample(uset, count, seed)):
        value = sinr(result.filter, result.waveform, u, model)
        rows.append((i, value, to_db(value), worst, to_db(worst), value >= worst - 1e-6))
    return rows


PATTERN_HEADER = ("azimuth_deg", "gain_linear", "gain_db")


def pattern_rows(result: DesignResult, scenario, step_deg: float = 0.25):
    grid = antenna_pattern(result.filter, result.waveform, scenario, default_grid(step_deg))
    return [(round(d, 10), g, db) for d, g, db in grid.rows()]


def _load_result(path) -> DesignResult:
    try:
        with open(path) as fh:
            return DesignResult.from_dict(json.load(fh))
    except FileNotFoundError as exc:
        raise InputError(f"result file not found: {path}") from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"unreadable result file {path}: {exc!r}") from exc


def cmd_design(args, log) -> int:
    started = time.perf_counter()
    scenario, uset, cfg = load_design_config(args.config, args.seed, args.tol, args.trials)
    log(f"designing ({args.kind}) for scenario {scenario.digest()[:12]}")
    if args.kind == "spherical" and not isinstance(uset, SphericalSet) or \
            args.kind == "annular" and not isinstance(uset, AnnularSet):
        raise ConfigError(f"config describes a different uncertainty kind than {args.kind!r}")
    result = run_design(scenario, uset, cfg)
    out = Path(args.out)
    _write_json(out, result.to_dict())
    _manifest(_manifest_path(out), config_hash=scenario.digest(), seed=cfg.rng_seed,
              algorithm=result.algorithm, tolerances=_tolerances(cfg), started=started, outputs=[out])
    log(f"worst-case SINR {result.worst_case_sinr_db:.3f} dB (status {result.status})")
    return EXIT_OK


def cmd_eval(args, log) -> int:
    started = time.perf_counter()
    scenario, uset, cfg = load_design_config(args.config, args.seed)
    result = _load_result(args.result)
    if result.scenario_hash != scenario.digest():
        raise InputError("result was produced for a different scenario")
    out = Path(args.out)
    if args.kind == "pattern":
        _write_csv(out, PATTERN_HEADER, pattern_rows(result, scenario, args.step))
    else:
        rows = sample_rows(result, scenario, uset, args.count, cfg.rng_seed)
        _write_csv(out, SAMPLE_HEADER, rows)
        log(f"{sum(r[-1] for r in rows)}/{len(rows)} samples at or above the worst case")
    _manifest(_manifest_path(out), config_hash=scenario.digest(), seed=cfg.rng_seed,
              algorithm=result.algorithm, tolerances=_tolerances(cfg), started=started, outputs=[out])
    return EXIT_OK


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def _spherical_cfg(args) -> DmsdrConfig:
    kw = {"rng_seed": args.seed or 0}
    if args.tol is not None:
        kw["sdp_tolerance"] = args.tol
    if args.trials is not None:
        kw["randomization_trials"] = args.trials
    return DmsdrConfig(**kw)


def _annular_cfg(args) -> DmdsdrConfig:
    kw = {"rng_seed": args.seed or 0}
    if args.tol is not None:
        kw["sdp_tolerance"] = args.tol
    if args.trials is not None:
        kw["randomization_trials"] = args.trials
    return DmdsdrConfig(**kw)


def random_multipath_scenario(num_scatterers: int, seed: int) -> ScenarioConfig:
    """Target at 30 degrees with scatterers at uniform directions and delays in 1..7."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(99,)))
    az = rng.uniform(-math.pi / 2, math.pi / 2, num_scatterers)
    delay = rng.integers(1, 8, num_scatterers)
    return reference_spherical_scenario(
        scatterers=tuple(PathSpec(float(a), int(d)) for a, d in zip(az, delay)))


def _spherical_panels(out_dir, tag, scenario, uset, cfg, log):
    model = SignalModel(scenario)
    result = design_spherical(model, uset, cfg)
    log(f"{tag}: worst-case SINR {result.worst_case_sinr_db:.3f} dB")
    files = [out_dir / f"{tag}_result.json", out_dir / f"{tag}a_pattern.csv", out_dir / f"{tag}b_sinr_samples.csv"]
    _write_json(files[0], result.to_dict())
    _write_csv(files[1], PATTERN_HEADER, pattern_rows(result, model))
    _write_csv(files[2], SAMPLE_HEADER, sample_rows(result, model, uset, 50, cfg.rng_seed))
    return files, spherical_document(scenario, uset.center, uset.radius, dataclasses.asdict(cfg))


def experiment_fig3(out_dir, args, log):
    cfg = _spherical_cfg(args)
    return _spherical_panels(out_dir, "fig3", reference_spherical_scenario(),
                             SphericalSet(REFERENCE_CENTER, 0.5), cfg, log) + ("dmsdr", cfg)


def experiment_fig4(out_dir, args, log):
    cfg = _spherical_cfg(args)
    scenario = reference_spherical_scenario()
    model = SignalModel(scenario)
    rows = []
    for r in RADII:
        res = design_spherical(model, SphericalSet(REFERENCE_CENTER, r), cfg)
        log(f"fig4: r={r:.1f} worst-case SINR {res.worst_case_sinr_db:.3f} dB")
        rows.append((r, res.worst_case_sinr, to_db(res.worst_case_sinr), res.sdr_bound,
                     to_db(res.sdr_bound), res.status))
    path = out_dir / "fig4_radius_sweep.csv"
    _write_csv(path, ("radius", "worst_case_sinr", "worst_case_sinr_db", "sdr_bound", "sdr_bound_db",
                      "status"), rows)
    doc = {"scenario": scenario.to_dict(), "radii": list(RADII),
           "center": [[z.real, z.imag] for z in REFERENCE_CENTER], "algorithm": dataclasses.asdict(cfg)}
    return [path], doc, "dmsdr", cfg


def experiment_fig5(out_dir, args, log):
    cfg = _spherical_cfg(args)
    scenario = random_multipath_scenario(25, cfg.rng_seed)
    K = scenario.num_paths
    center = np.full(K, np.exp(1j * math.pi / 4) / math.sqrt(K))
    return _spherical_panels(out_dir, "fig5", scenario, SphericalSet(center, 0.8), cfg, log) + ("dmsdr", cfg)


def _trace_rows(label, trace):
    return [(label, m, a, b, ub) for m, a, b, ub in trace.rows()]


TRACE_HEADER = ("set", "iter", "p_rs", "p_w", "upper_bound")


def _theta_label(t) -> str:
    return "theta(" + ",".join(f"{v:g}" for v in t) + ")"


def experiment_fig6(out_dir, args, log):
    cfg = _annular_cfg(args)
    scenario = reference_annular_scenario()
    model = SignalModel(scenario)
    uset = AnnularSet.theta(*FIG7_SETS[0])
    result = design_annular(model, uset, cfg)
    log(f"fig6: worst-case SINR {result.worst_case_sinr_db:.3f} dB after {len(result.trace)} iterations")
    files = [out_dir / "fig6_result.json", out_dir / "fig6a_pattern.csv", out_dir / "fig6b_sinr_samples.csv"]
    _write_json(files[0], result.to_dict())
    _write_csv(files[1], PATTERN_HEADER, pattern_rows(result, model))
    _write_csv(files[2], SAMPLE_HEADER, sample_rows(result, model, uset, 50, cfg.rng_seed))
    doc = annular_document(scenario, uset.lower, uset.upper, dataclasses.asdict(cfg))
    return files, doc, "dmdsdr", cfg


def _annular_sweep(sets, cfg, model, log, tag):
    out = []
    for t in sets:
        res = design_annular(model, AnnularSet.theta(*t), cfg)
        log(f"{tag}: {_theta_label(t)} worst-case SINR {res.worst_case_sinr_db:.3f} dB, "
            f"{len(res.trace)} iterations")
        out.append((t, res))
    return out


def experiment_fig7(out_dir, args, log):
    cfg = _annular_cfg(args)
    scenario = reference_annular_scenario()
    runs = _annular_sweep(FIG7_SETS, cfg, SignalModel(scenario), log, "fig7")
    rows = [row for t, res in runs for row in _trace_rows(_theta_label(t), res.trace)]
    path = out_dir / "fig7_traces.csv"
    _write_csv(path, TRACE_HEADER, rows)
    doc = {"scenario": scenario.to_dict(), "sets": [list(t) for t in FIG7_SETS],
           "algorithm": dataclasses.asdict(cfg)}
    return [path], doc, "dmdsdr", cfg


def experiment_fig8(out_dir, args, log):
    cfg = _annular_cfg(args)
    scenario = reference_annular_scenario()
    model = SignalModel(scenario)
    runs = _annular_sweep(FIG8_SETS, cfg, model, log, "fig8")
    traces = [row for t, res in runs for row in _trace_rows(_theta_label(t), res.trace)]
    patterns = [(_theta_label(t),) + row for t, res in runs for row in pattern_rows(res, model)]
    files = [out_dir / "fig8a_traces.csv", out_dir / "fig8b_patterns.csv"]
    _write_csv(files[0], TRACE_HEADER, traces)
    _write_csv(files[1], ("set",) + PATTERN_HEADER, patterns)
    doc = {"scenario": scenario.to_dict(), "sets": [list(t) for t in FIG8_SETS],
           "algorithm": dataclasses.asdict(cfg)}
    return files, doc, "dmdsdr", cfg


_EXPERIMENTS = {
    "fig3": experiment_fig3, "fig4": experiment_fig4, "fig5": experiment_fig5,
    "fig6": experiment_fig6, "fig7": experiment_fig7, "fig8": experiment_fig8,
}


def cmd_experiment(args, log) -> int:
    if args.name not in _EXPERIMENTS:
        raise ConfigError(f"unknown experiment {args.name!r}; choose from {', '.join(EXPERIMENTS)}")
    started = time.perf_counter()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    files, doc, algorithm, cfg = _EXPERIMENTS[args.name](out_dir, args, log)
    _manifest(out_dir / f"{args.name}.manifest.json", config_hash=_hash_doc(doc), seed=cfg.rng_seed,
              algorithm=algorithm, tolerances=_tolerances(cfg), started=started, outputs=files)
    return EXIT_OK


def cmd_example_config(args, log) -> int:
    if args.kind == "spherical":
        doc = spherical_document(reference_spherical_scenario(), REFERENCE_CENTER, 0.5,
                                 {"randomization_trials": 100, "rng_seed": 0})
    else:
        t = FIG7_SETS[0]
        s = AnnularSet.theta(*t)
        doc = annular_document(reference_annular_scenario(), s.lower, s.upper,
                               {"relative_gap": 1e-3, "randomization_trials": 100, "rng_seed": 0})
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        _atomic_write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (overrides the config)")
    common.add_argument("--tol", type=float, default=None, help="SDP tolerance")
    common.add_argument("--trials", type=int, default=None, help="randomization trials Q")
    common.add_argument("--quiet", action="store_true", help="suppress progress messages")

    p = argparse.ArgumentParser(prog="robustwf", description="Robust MIMO radar waveform/filter design.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", parents=[common], help="run a design from a JSON config")
    d.add_argument("kind", choices=("spherical", "annular"))
    d.add_argument("--config", required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_design)

    e = sub.add_parser("eval", parents=[common], help="evaluate a design result")
    e.add_argument("kind", choices=("pattern", "sinr-samples"))
    e.add_argument("--result", required=True)
    e.add_argument("--config", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--count", type=int, default=50)
    e.add_argument("--step", type=float, default=0.25, help="pattern grid spacing in degrees")
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("experiment", parents=[common], help="run a reference experiment")
    x.add_argument("name", help=", ".join(EXPERIMENTS))
    x.add_argument("--out", required=True, help="output directory")
    x.set_defaults(func=cmd_experiment)

    c = sub.add_parser("example-config", help="print a reference design config")
    c.add_argument("kind", choices=("spherical", "annular"))
    c.add_argument("--out", default=None)
    c.add_argument("--quiet", action="store_true")
    c.set_defaults(func=cmd_example_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    log = _Log(getattr(args, "quiet", False))
    try:
        if getattr(args, "count", 1) < 1:
            raise ConfigError("--count must be >= 1")
        return args.func(args, log)
    except ConfigError as exc:
        print(f"robustwf: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, MonotonicityError) as exc:
        print(f"robustwf: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except InputError as exc:
        print(f"robustwf: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
