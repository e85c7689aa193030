"""Seeded Monte-Carlo experiment sweeps with CSV output.

Config files are YAML (JSON also parses).  Every key is optional; missing
values come from the chosen preset (``paper`` = the published simulation
parameters, ``desk`` = a small instance that runs in seconds)::

    preset: paper            # or desk
    seed: 0
    trials: 1
    output: results.csv
    record_timing: false     # true fills wall_ms (output is then not reproducible)
    workers: 1               # process pool size
    system:   {nz, ny, nrz, nry, fc, bandwidth, subcarriers, pilots, spacing, c}
    hyper:    {lambda1, lambda2, delta, step, rho, t_max, k_max, rel_tol,
               mode_ranks, per_entry}
    scenario: {paths, distance_range, bs_distance, schedule, snr_db}
    sweep:    # exactly one of
      snr: [0, 10, 20, 30]              # dB; .inf for noiseless
      bandwidth: [1.0e9, 2.0e9]         # Hz
      irs_elements: [[8, 4], [16, 4]]   # (Nr_z, Nr_y)
      paths: [1, 2, 3]
      pilot_length: [64, 96]
      lambda_grid: {lambda1: [0.1, 1], lambda2: [0.5, 1]}

Randomness: trial ``k`` draws from ``SeedSequence(seed, spawn_key=(k,))``,
split into independent streams for the scenario, the phase schedule and the
noise.  A trial therefore sees the same channel at every sweep point, and
adding trials or sweep points never changes existing rows.
"""

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import List, Optional, Tuple

import numpy as np
import yaml

from .analysis import CrlbInputs, crlb, nmse, to_db
from .channel_model import (
    DEFAULT_BS_DISTANCE,
    DEFAULT_UE_DISTANCE_RANGE,
    SystemConfig,
    in_near_field,
    sample_scenario,
)
from .estimator import Hyperparams, estimate_channels
from .observation import SCHEDULE_KINDS, build_phase_schedule, observe, snr_to_noise_power

log = logging.getLogger(__name__)

SWEEP_KINDS = ("snr", "bandwidth", "irs_elements", "paths", "pilot_length", "lambda_grid")
CSV_COLUMNS = (
    "sweep_var",
    "sweep_value",
    "trial",
    "nmse_db",
    "crlb",
    "iterations",
    "objective_final",
    "wall_ms",
    "seed",
)

PRESETS = {
    "paper": SystemConfig(),
    "desk": SystemConfig(nz=4, ny=4, nrz=8, nry=4, subcarriers=2, pilots=64),
}


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path


@dataclass(frozen=True)
class ScenarioParams:
    paths: int = 2
    distance_range: Tuple[float, float] = DEFAULT_UE_DISTANCE_RANGE
    bs_distance: float = DEFAULT_BS_DISTANCE
    schedule: str = "orthogonal-dft"
    snr_db: float = 20.0


@dataclass(frozen=True)
class Sweep:
    kind: str = "snr"
    values: tuple = (0.0, 10.0, 20.0, 30.0)

    def points(self) -> list:
        if self.kind == "lambda_grid":
            l1s, l2s = self.values
            return [(a, b) for a in l1s for b in l2s]
        return list(self.values)


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    hyper: Hyperparams = field(default_factory=Hyperparams)
    scenario: ScenarioParams = field(default_factory=ScenarioParams)
    sweep: Sweep = field(default_factory=Sweep)
    trials: int = 1
    seed: int = 0
    output: str = "results.csv"
    record_timing: bool = False
    workers: int = 1
    preset: str = "paper"


@dataclass(frozen=True)
class ResultRow:
    sweep_var: str
    sweep_value: str
    trial: int
    nmse_db: float
    crlb: float
    iterations: int
    objective_final: float
    wall_ms: float
    seed: int


# --- config loading -----------------------------------------------------------


def _section(cls, raw, path: str, base):
    if raw is None:
        return base
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected a mapping")
    known = {f.name for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown key")
    kw = asdict(base)
    for key, v in raw.items():
        kw[key] = _coerce(v, kw[key], f"{path}.{key}")
    for key in ("distance_range", "mode_ranks"):
        if kw.get(key) is not None and key in known:
            kw[key] = tuple(kw[key])
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from exc


def _coerce(value, default, path):
    # YAML 1.1 reads "1e-10" as a string, so numbers follow the default's type
    if isinstance(value, str) and value != "auto" and (default is None or isinstance(default, (float, str))):
        try:
            return float(value)
        except ValueError:
            if isinstance(default, str):
                return value  # let the dataclass reject it
            raise ConfigError(path, f"expected a number, got {value!r}") from None
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if isinstance(default, int) and not isinstance(default, bool) and isinstance(value, float):
        if value != int(value):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value)
    return value


def _parse_sweep(raw) -> Sweep:
    if raw is None:
        return Sweep()
    if not isinstance(raw, dict) or len(raw) != 1:
        raise ConfigError("sweep", f"expected exactly one of {', '.join(SWEEP_KINDS)}")
    (kind, vals), = raw.items()
    path = f"sweep.{kind}"
    if kind not in SWEEP_KINDS:
        raise ConfigError(path, "unknown sweep kind")
    try:
        if kind == "lambda_grid":
            if not isinstance(vals, dict) or set(vals) != {"lambda1", "lambda2"}:
                raise ConfigError(path, "expected keys lambda1 and lambda2")
            l1 = tuple(float(v) for v in vals["lambda1"])
            l2 = tuple(float(v) for v in vals["lambda2"])
            if not l1 or not l2:
                raise ConfigError(path, "lambda lists must be non-empty")
            return Sweep(kind, (l1, l2))
        if not isinstance(vals, (list, tuple)) or not vals:
            raise ConfigError(path, "expected a non-empty list")
        if kind == "irs_elements":
            out = tuple((int(a), int(b)) for a, b in vals)
        elif kind in ("paths", "pilot_length"):
            out = tuple(int(v) for v in vals)
        else:
            out = tuple(float(v) for v in vals)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(path, str(exc)) from exc
    return Sweep(kind, out)


def point_setup(cfg: ExperimentConfig, value):
    """``(system, hyper, paths, snr_db)`` for one sweep point."""
    system, hyper, sc = cfg.system, cfg.hyper, cfg.scenario
    paths, snr = sc.paths, sc.snr_db
    kind = cfg.sweep.kind
    if kind == "snr":
        snr = float(value)
    elif kind == "bandwidth":
        system = replace(system, bandwidth=float(value))
    elif kind == "irs_elements":
        system = replace(system, nrz=int(value[0]), nry=int(value[1]))
    elif kind == "paths":
        paths = int(value)
    elif kind == "pilot_length":
        system = replace(system, pilots=int(value))
    elif kind == "lambda_grid":
        hyper = replace(hyper, lambda1=float(value[0]), lambda2=float(value[1]))
    return system, hyper, paths, snr


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.trials < 1:
        raise ConfigError("trials", "must be at least 1")
    if cfg.workers < 1:
        raise ConfigError("workers", "must be at least 1")
    if cfg.scenario.schedule not in SCHEDULE_KINDS:
        raise ConfigError("scenario.schedule", f"must be one of {SCHEDULE_KINDS}")
    lo, hi = cfg.scenario.distance_range
    if not 0 < lo <= hi:
        raise ConfigError("scenario.distance_range", "need 0 < low <= high")
    if cfg.scenario.paths < 1:
        raise ConfigError("scenario.paths", "must be at least 1")
    for i, value in enumerate(cfg.sweep.points()):
        where = f"sweep.{cfg.sweep.kind}[{i}]"
        try:
            system, hyper, paths, _ = point_setup(cfg, value)
        except ValueError as exc:
            raise ConfigError(where, str(exc)) from exc
        if system.pilots < system.nr:
            raise ConfigError(
                where,
                f"channel recovery needs P >= N_r, got P={system.pilots}, N_r={system.nr}",
            )
        if paths < 1:
            raise ConfigError(where, "number of paths must be at least 1")
    return cfg


def config_from_dict(raw: Optional[dict], preset: Optional[str] = None) -> ExperimentConfig:
    raw = dict(raw or {})
    known = {f.name for f in fields(ExperimentConfig)}
    for key in raw:
        if key not in known:
            raise ConfigError(key, "unknown key")
    preset = preset or raw.get("preset", "paper")
    if preset not in PRESETS:
        raise ConfigError("preset", f"must be one of {sorted(PRESETS)}")
    cfg = ExperimentConfig(
        system=_section(SystemConfig, raw.get("system"), "system", PRESETS[preset]),
        hyper=_section(Hyperparams, raw.get("hyper"), "hyper", Hyperparams()),
        scenario=_section(ScenarioParams, raw.get("scenario"), "scenario", ScenarioParams()),
        sweep=_parse_sweep(raw.get("sweep")),
        preset=preset,
    )
    scalars = {}
    for key, typ in (("trials", int), ("seed", int), ("output", str), ("record_timing", bool), ("workers", int)):
        if key in raw:
            v = raw[key]
            if typ is int and (isinstance(v, bool) or int(v) != v):
                raise ConfigError(key, f"expected an integer, got {v!r}")
            if typ is bool and not isinstance(v, bool):
                raise ConfigError(key, f"expected true/false, got {v!r}")
            scalars[key] = typ(v)
    return validate_config(replace(cfg, **scalars))


def config_to_dict(cfg: ExperimentConfig) -> dict:
    sweep = cfg.sweep
    if sweep.kind == "lambda_grid":
        sv = {"lambda1": list(sweep.values[0]), "lambda2": list(sweep.values[1])}
    elif sweep.kind == "irs_elements":
        sv = [list(v) for v in sweep.values]
    else:
        sv = list(sweep.values)
    hyper = asdict(cfg.hyper)
    if hyper["mode_ranks"] is not None:
        hyper["mode_ranks"] = list(hyper["mode_ranks"])
    scenario = asdict(cfg.scenario)
    scenario["distance_range"] = list(scenario["distance_range"])
    return {
        "preset": cfg.preset,
        "seed": cfg.seed,
        "trials": cfg.trials,
        "output": cfg.output,
        "record_timing": cfg.record_timing,
        "workers": cfg.workers,
        "system": asdict(cfg.system),
        "hyper": hyper,
        "scenario": scenario,
        "sweep": {sweep.kind: sv},
    }


def load_config(path, preset: Optional[str] = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"cannot parse {path}: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError("", "top level must be a mapping")
    return config_from_dict(raw, preset)


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=False)


# --- running ------------------------------------------------------------------


def _sig(x: float) -> float:
    return float(format(x, ".9g"))


def format_value(kind: str, value) -> str:
    if kind == "irs_elements":
        return f"{value[0]}x{value[1]}"
    if kind == "lambda_grid":
        return f"{format(value[0], '.9g')}:{format(value[1], '.9g')}"
    if kind in ("paths", "pilot_length"):
        return str(int(value))
    return format(float(value), ".9g")


def trial_streams(seed: int, trial: int):
    """Independent generators for (scenario, schedule, noise) of one trial."""
    ss = np.random.SeedSequence(seed, spawn_key=(trial,))
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def run_point(cfg: ExperimentConfig, index: int, trial: int):
    """Run one (sweep point, trial); returns ``(row, objective traces)``."""
    value = cfg.sweep.points()[index]
    label = format_value(cfg.sweep.kind, value)
    t0 = time.perf_counter()
    try:
        system, hyper, paths, snr = point_setup(cfg, value)
        rng_ch, rng_v, rng_n = trial_streams(cfg.seed, trial)
        ch = sample_scenario(system, paths, cfg.scenario.distance_range, rng_ch, cfg.scenario.bs_distance)
        schedule = build_phase_schedule(system.nr, system.pilots, cfg.scenario.schedule, rng_v)
        sigma2 = snr_to_noise_power(ch, schedule, snr)  # +inf dB gives 0
        obs = observe(ch, schedule, sigma2, rng_n, snr)
        res = estimate_channels(obs, hyper)
        err = nmse(res.channels, ch.tensors)
        bound = crlb(CrlbInputs.from_config(system, sigma2))
        wall = (time.perf_counter() - t0) * 1e3 if cfg.record_timing else 0.0
        row = ResultRow(
            cfg.sweep.kind,
            label,
            trial,
            _sig(to_db(err)),
            _sig(bound),
            max(res.iterations),
            _sig(float(np.mean([tr[-1] for tr in res.traces]))),
            _sig(wall),
            cfg.seed,
        )
        return row, [list(tr) for tr in res.traces]
    except Exception:
        log.exception("sweep point %s=%s trial %d failed", cfg.sweep.kind, label, trial)
        return ResultRow(cfg.sweep.kind, label, trial, math.nan, math.nan, -1, math.nan, 0.0, cfg.seed), []


def _run_task(args):
    return run_point(*args)


def _run_all(cfg: ExperimentConfig):
    validate_config(cfg)
    for value in cfg.sweep.points():
        system = point_setup(cfg, value)[0]
        if not in_near_field(system, cfg.scenario.distance_range):
            log.info(
                "%s=%s: UE distances exceed the Rayleigh distance (far-field regime)",
                cfg.sweep.kind,
                format_value(cfg.sweep.kind, value),
            )
    tasks = [(cfg, i, k) for i in range(len(cfg.sweep.points())) for k in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_run_task, tasks))
    return [_run_task(t) for t in tasks]


def run_experiment(cfg: ExperimentConfig, trace_path=None) -> List[ResultRow]:
    """One row per (sweep point, trial), ordered by point then trial.

    With ``trace_path`` the per-iteration objective of every subcarrier is
    also written there as CSV.
    """
    out = _run_all(cfg)
    rows = [r for r, _ in out]
    if trace_path is not None:
        emit_traces(out, trace_path)
    return rows


# --- CSV ----------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".9g")
    return str(v)


def emit_results(rows, path, format: str = "csv") -> None:
    if format != "csv":
        raise ValueError(f"unsupported output format {format!r}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])


def emit_traces(results, path) -> None:
    """Long-format convergence traces from ``(row, traces)`` pairs."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("sweep_var", "sweep_value", "trial", "subcarrier", "iteration", "objective"))
        for row, traces in results:
            for m, tr in enumerate(traces, start=1):
                for t, v in enumerate(tr):
                    w.writerow((row.sweep_var, row.sweep_value, row.trial, m, t, _fmt(float(v))))


def read_results(path) -> List[ResultRow]:
    out = []
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        for rec in rd:
            d = dict(zip(CSV_COLUMNS, rec))
            out.append(
                ResultRow(
                    d["sweep_var"],
                    d["sweep_value"],
                    int(d["trial"]),
                    float(d["nmse_db"]),
                    float(d["crlb"]),
                    int(d["iterations"]),
                    float(d["objective_final"]),
                    float(d["wall_ms"]),
                    int(d["seed"]),
                )
            )
    return out
