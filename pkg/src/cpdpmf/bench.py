"""Monte-Carlo benchmark harness for the terrain-aided navigation scenario.

A scenario is a single JSON document (see :func:`default_scenario` for the
full set of fields).  :func:`run_benchmark` simulates ``mc_runs``
trajectories and runs every enabled filter on the same measurements;
:func:`emit_artifacts` writes the report files and :func:`main` is the
command-line entry point::

    cpdpmf run --config scenario.json --out results/ [--filters a,b] [--mc N] [--seed S]

Artifacts
---------
``report.json``
    Aggregated accuracy, divergence counts and per-run details.  Wall
    times are kept out of this file so that reruns are byte-identical.
``summary.csv``
    ``name,rmse_pos_m,rmse_vel_mps,mean_step_s,divergences``.
``traces/run_<i>_<filter>.csv``
    Truth and estimate per step for one run and one filter.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DivergenceError, MapExitError
from .filters import (CpdFilterConfig, UkfParams, init_cpd_state, init_full_state, init_particles,
                      lgbf_cpd_step, lgbf_full_step, pf_bootstrap_step, ukf_step)
from .grid import GaussianMoments
from .tan import CvModel, MeasModel, TanModel, TerrainMap, load_esri_ascii, simulate, synth_terrain

FILTER_LABELS = {"lgbf_cpd": "LGbF CPD", "lgbf": "LGbF", "pf": "PFb", "ukf": "UKF"}
SUMMARY_HEADER = ["name", "rmse_pos_m", "rmse_vel_mps", "mean_step_s", "divergences"]
TRACE_HEADER = ["k", "px", "py", "vx", "vy", "est_px", "est_py", "est_vx", "est_vy"]
MAX_SIM_ATTEMPTS = 20

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3

_GRID_FIELDS = {"counts", "sigma_mult", "max_rank", "als_iters", "als_tol", "als_init", "seed",
                "svd_energy", "grid_policy"}
_FILTER_FIELDS = {"lgbf_cpd": _GRID_FIELDS, "lgbf": _GRID_FIELDS, "pf": {"n_particles"},
                  "ukf": {"alpha", "beta", "kappa"}}
_TERRAIN_FIELDS = {"seed", "extent", "cell", "roughness", "base", "n_hills", "width_range", "amplitude",
                   "dem_path"}

PAPER_SCALE = {"lgbf_cpd": {"counts": [101, 101, 101, 101]}, "lgbf": {"counts": [51, 51, 41, 41]}}


def default_scenario() -> dict:
    """The built-in synthetic scenario as a plain JSON-compatible dict."""
    return {
        "terrain": {"seed": 0, "extent": 8000.0, "cell": 20.0, "roughness": 1.0,
                    "n_hills": 1500, "width_range": [100.0, 400.0], "amplitude": 20.0},
        "steps": 100,
        "initial": {"mean": [3000.0, 3000.0, 8.0, 5.0], "std": [100.0, 100.0, 1.0, 1.0]},
        "q_diag": [0.25, 0.25, 0.01, 0.01],
        "r_diag": [9.0, 0.09, 0.09],
        "filters": {
            "lgbf_cpd": {"counts": [21, 21, 21, 21], "max_rank": 10},
            "lgbf": {"counts": [21, 21, 21, 21]},
            "pf": {"n_particles": 21 ** 4},
            "ukf": {},
        },
        "mc_runs": 10,
        "seed": 0,
        "out": "bench_out",
    }


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario.  Build with :meth:`from_dict` or :meth:`load`."""

    terrain: dict
    steps: int
    initial_mean: tuple
    initial_std: tuple
    q_diag: tuple
    r_diag: tuple
    filters: dict
    mc_runs: int
    seed: int
    out: str = "bench_out"

    @classmethod
    def from_dict(cls, doc: dict, base_dir=None) -> "ScenarioConfig":
        if not isinstance(doc, dict):
            raise ConfigError("scenario must be a JSON object")
        known = set(default_scenario())
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown field(s): {', '.join(unknown)}")
        merged = default_scenario()
        merged.update(doc)

        terrain = dict(_require(merged, "terrain", dict))
        bad = sorted(set(terrain) - _TERRAIN_FIELDS)
        if bad:
            raise ConfigError(f"terrain: unknown field(s): {', '.join(bad)}")
        if "dem_path" in terrain:
            path = Path(terrain["dem_path"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            if not path.is_file():
                raise ConfigError(f"terrain.dem_path: file not found: {path}")
            terrain["dem_path"] = str(path)

        steps = _int_field(merged, "steps", 1)
        mc_runs = _int_field(merged, "mc_runs", 1)
        seed = _int_field(merged, "seed", 0)
        initial = _require(merged, "initial", dict)
        mean = _vector(initial.get("mean"), "initial.mean", 4)
        std = _vector(initial.get("std"), "initial.std", 4, positive=True)
        q = _vector(merged["q_diag"], "q_diag", 4, nonnegative=True)
        r = _vector(merged["r_diag"], "r_diag", 3, positive=True)

        filters = _require(merged, "filters", dict)
        checked = {}
        for name, opts in filters.items():
            if name not in _FILTER_FIELDS:
                raise ConfigError(f"filters: unknown filter {name!r}; choose from {sorted(_FILTER_FIELDS)}")
            if not isinstance(opts, dict):
                raise ConfigError(f"filters.{name}: expected an object")
            bad = sorted(set(opts) - _FILTER_FIELDS[name])
            if bad:
                raise ConfigError(f"filters.{name}: unknown field(s): {', '.join(bad)}")
            checked[name] = dict(opts)
        cfg = cls(terrain, steps, mean, std, q, r, checked, mc_runs, seed, str(merged.get("out", "bench_out")))
        for name in checked:
            try:
                cfg.filter_settings(name)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"filters.{name}: {exc}") from None
        return cfg

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        try:
            return cls.from_dict(doc, base_dir=path.parent)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "terrain": self.terrain, "steps": self.steps,
            "initial": {"mean": list(self.initial_mean), "std": list(self.initial_std)},
            "q_diag": list(self.q_diag), "r_diag": list(self.r_diag),
            "filters": self.filters, "mc_runs": self.mc_runs, "seed": self.seed, "out": self.out,
        }

    def with_overrides(self, filters=None, mc_runs=None, seed=None, out=None, paper_scale=False):
        doc = copy.deepcopy(self.to_dict())
        if filters is not None:
            missing = [f for f in filters if f not in doc["filters"] and f not in _FILTER_FIELDS]
            if missing:
                raise ConfigError(f"--filters: unknown filter(s): {', '.join(missing)}")
            doc["filters"] = {f: doc["filters"].get(f, {}) for f in filters}
        if paper_scale:
            for name, opts in PAPER_SCALE.items():
                if name in doc["filters"]:
                    doc["filters"][name].update(opts)
        for key, val in (("mc_runs", mc_runs), ("seed", seed), ("out", out)):
            if val is not None:
                doc[key] = val
        return ScenarioConfig.from_dict(doc)

    def filter_settings(self, name):
        """Typed settings object for one roster entry."""
        opts = self.filters[name]
        if name in ("lgbf_cpd", "lgbf"):
            return CpdFilterConfig(**opts)
        if name == "ukf":
            return UkfParams(**opts)
        n = int(opts.get("n_particles", 21 ** 4))
        if n < 1:
            raise ValueError(f"n_particles must be >= 1, got {n}")
        return n

    def build_terrain(self) -> TerrainMap:
        t = dict(self.terrain)
        if "dem_path" in t:
            return load_esri_ascii(t["dem_path"])
        if "width_range" in t:
            t["width_range"] = tuple(t["width_range"])
        return synth_terrain(**t)

    def build_model(self) -> TanModel:
        dyn = CvModel.nearly_constant_velocity(self.q_diag)
        return TanModel(dyn, MeasModel(self.r_diag), self.build_terrain())

    @property
    def initial_moments(self) -> GaussianMoments:
        return GaussianMoments.diagonal(self.initial_mean, self.initial_std)


def _require(doc, key, typ):
    val = doc.get(key)
    if not isinstance(val, typ):
        raise ConfigError(f"{key}: expected {typ.__name__}, got {type(val).__name__}")
    return val


def _int_field(doc, key, minimum):
    val = doc.get(key)
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{key}: expected an integer, got {val!r}")
    if val < minimum:
        raise ConfigError(f"{key}: must be >= {minimum}, got {val}")
    return val


def _vector(val, key, n, positive=False, nonnegative=False):
    if not isinstance(val, (list, tuple)) or len(val) != n:
        raise ConfigError(f"{key}: expected a list of {n} numbers, got {val!r}")
    try:
        out = tuple(float(v) for v in val)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a list of {n} numbers, got {val!r}") from None
    if not all(np.isfinite(out)):
        raise ConfigError(f"{key}: entries must be finite")
    if positive and min(out) <= 0:
        raise ConfigError(f"{key}: entries must be positive")
    if nonnegative and min(out) < 0:
        raise ConfigError(f"{key}: entries must be nonnegative")
    return out


@dataclass
class FilterRun:
    """Outcome of one filter on one trajectory."""

    estimates: np.ndarray | None
    step_times: list
    diverged: bool
    input_hash: str
    max_mass_error: float | None = None
    error: str | None = None


@dataclass
class FilterSummary:
    name: str
    rmse_pos_m: float
    rmse_vel_mps: float
    mean_step_s: float
    divergences: int
    max_mass_error: float | None = None

    @property
    def label(self) -> str:
        return FILTER_LABELS.get(self.name, self.name)


@dataclass
class RunRecord:
    index: int
    seed: int
    x0: np.ndarray
    truth: np.ndarray
    input_hash: str
    results: dict = field(default_factory=dict)


@dataclass
class RunReport:
    config: ScenarioConfig
    runs: list
    summaries: dict

    def to_json_dict(self) -> dict:
        """Deterministic content of ``report.json`` (no wall times)."""
        filters = {}
        for name, s in self.summaries.items():
            filters[name] = {"label": s.label, "rmse_pos_m": s.rmse_pos_m, "rmse_vel_mps": s.rmse_vel_mps,
                             "divergences": s.divergences, "max_mass_error": s.max_mass_error}
        runs = []
        for rec in self.runs:
            entry = {"index": rec.index, "seed": rec.seed, "x0": rec.x0.tolist(), "input_hash": rec.input_hash,
                     "filters": {}}
            for name, res in rec.results.items():
                entry["filters"][name] = {"diverged": res.diverged, "error": res.error,
                                          "input_hash": res.input_hash, "max_mass_error": res.max_mass_error}
            runs.append(entry)
        return {"schema": 1, "config": self.config.to_dict(), "filters": filters, "runs": runs}


def run_seed(master: int, index: int, attempt: int = 0) -> int:
    """Per-run seed derived from the master seed and run index."""
    return int(np.random.SeedSequence([master, index, attempt]).generate_state(1)[0])


def measurement_hash(measurements, headings) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(measurements, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(headings, dtype=np.float64).tobytes())
    return h.hexdigest()


def _run_filter(name, settings, model, moments, measurements, headings, seed) -> FilterRun:
    rng = np.random.default_rng(seed)
    if name == "lgbf_cpd":
        state = init_cpd_state(moments, settings)
        step = lambda s, z, psi: lgbf_cpd_step(s, z, psi, model, settings)
    elif name == "lgbf":
        state = init_full_state(moments, settings)
        step = lambda s, z, psi: lgbf_full_step(s, z, psi, model, settings)
    elif name == "pf":
        state = init_particles(moments, settings, rng)
        step = lambda s, z, psi: pf_bootstrap_step(s, z, psi, model, rng)
    else:
        state = moments
        step = lambda s, z, psi: ukf_step(s, z, psi, model, settings)
    grid_based = name in ("lgbf_cpd", "lgbf")

    estimates = np.empty((len(headings), 4))
    times = []
    mass_err = abs(state.pmd.mass() - 1.0) if grid_based else None
    try:
        for k in range(len(headings)):
            t0 = time.perf_counter()
            state, est = step(state, measurements[k], headings[k])
            times.append(time.perf_counter() - t0)
            estimates[k] = est
            if grid_based:
                mass_err = max(mass_err, abs(state.pmd.mass() - 1.0))
    except (DivergenceError, np.linalg.LinAlgError) as exc:
        return FilterRun(None, times, True, measurement_hash(measurements, headings), mass_err,
                         f"step {k}: {exc}")
    if not np.all(np.isfinite(estimates)):
        return FilterRun(None, times, True, measurement_hash(measurements, headings), mass_err,
                         "non-finite estimate")
    return FilterRun(estimates, times, False, measurement_hash(measurements, headings), mass_err)


def _simulate_run(cfg: ScenarioConfig, model: TanModel, index: int):
    moments = cfg.initial_moments
    for attempt in range(MAX_SIM_ATTEMPTS):
        seed = run_seed(cfg.seed, index, attempt)
        rng = np.random.default_rng(seed)
        x0 = moments.mean + np.asarray(cfg.initial_std) * rng.standard_normal(4)
        try:
            return seed, x0, simulate(model.dynamics, model.meas, model.terrain, x0, cfg.steps, seed + 1)
        except MapExitError as exc:
            last = exc
    raise ConfigError(f"run {index}: trajectory left the map in {MAX_SIM_ATTEMPTS} attempts ({last})")


def aggregate(name, truths, estimates, step_times, divergences, mass_errors=()) -> FilterSummary:
    """Root of the mean squared error over all steps of all non-diverged runs."""
    if estimates:
        err = np.concatenate([e - t for e, t in zip(estimates, truths)])
        pos = float(np.sqrt(np.mean(np.sum(err[:, :2] ** 2, axis=1))))
        vel = float(np.sqrt(np.mean(np.sum(err[:, 2:] ** 2, axis=1))))
    else:
        pos = vel = float("nan")
    mean_step = float(np.mean(step_times)) if len(step_times) else float("nan")
    mass = [m for m in mass_errors if m is not None]
    return FilterSummary(name, pos, vel, mean_step, divergences, max(mass) if mass else None)


def run_benchmark(cfg: ScenarioConfig, log=None) -> RunReport:
    """Simulate ``cfg.mc_runs`` trajectories and run every rostered filter on each."""
    model = cfg.build_model()
    moments = cfg.initial_moments
    settings = {name: cfg.filter_settings(name) for name in cfg.filters}
    runs = []
    for i in range(cfg.mc_runs):
        seed, x0, traj = _simulate_run(cfg, model, i)
        rec = RunRecord(i, seed, x0, traj.states, measurement_hash(traj.measurements, traj.headings))
        for name in cfg.filters:
            res = _run_filter(name, settings[name], model, moments, traj.measurements, traj.headings, seed + 2)
            if res.input_hash != rec.input_hash:
                raise RuntimeError(f"filter {name} consumed different measurements in run {i}")
            rec.results[name] = res
            if log is not None:
                status = "diverged" if res.diverged else f"{np.mean(res.step_times):.4f} s/step"
                log(f"run {i} {name}: {status}")
        runs.append(rec)

    summaries = {}
    for name in cfg.filters:
        ok = [r for r in runs if not r.results[name].diverged]
        summaries[name] = aggregate(
            name, [r.truth for r in ok], [r.results[name].estimates for r in ok],
            [t for r in runs for t in r.results[name].step_times],
            len(runs) - len(ok), [r.results[name].max_mass_error for r in runs])
    return RunReport(cfg, runs, summaries)


def _fmt(x) -> str:
    return repr(float(x))


def emit_artifacts(report: RunReport, out_dir) -> list:
    """Write ``report.json``, ``summary.csv`` and per-run traces; return the paths."""
    out = Path(out_dir)
    written = []
    try:
        (out / "traces").mkdir(parents=True, exist_ok=True)
        path = out / "report.json"
        path.write_text(json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n")
        written.append(path)

        path = out / "summary.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SUMMARY_HEADER)
            for s in report.summaries.values():
                w.writerow([s.name, _fmt(s.rmse_pos_m), _fmt(s.rmse_vel_mps), _fmt(s.mean_step_s), s.divergences])
        written.append(path)

        for rec in report.runs:
            for name, res in rec.results.items():
                path = out / "traces" / f"run_{rec.index}_{name}.csv"
                with path.open("w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(TRACE_HEADER)
                    est = res.estimates if res.estimates is not None else np.full_like(rec.truth, np.nan)
                    for k, (x, e) in enumerate(zip(rec.truth, est)):
                        w.writerow([k] + [_fmt(v) for v in x] + [_fmt(v) for v in e])
                written.append(path)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write artifact: {exc.strerror}", exc.filename) from None
    return written


_ROW_RE = re.compile(r"^(?P<label>.+?)\s+(?P<pos>[-+0-9.eEinfa]+) m, (?P<vel>[-+0-9.eEinfa]+) m/s, "
                     r"(?P<time>[-+0-9.eEinfa]+) s$")


def render_row(summary: FilterSummary) -> str:
    """One table line, e.g. ``LGbF CPD 14.13 m, 0.80 m/s, 0.06 s``."""
    return f"{summary.label} {summary.rmse_pos_m:.2f} m, {summary.rmse_vel_mps:.2f} m/s, {summary.mean_step_s:.2f} s"


def parse_row(line: str) -> tuple:
    """Inverse of :func:`render_row`: ``(label, rmse_pos, rmse_vel, step_s)``."""
    m = _ROW_RE.match(line.strip())
    if m is None:
        raise ValueError(f"not a summary row: {line!r}")
    return m["label"], float(m["pos"]), float(m["vel"]), float(m["time"])


def render_table(report: RunReport) -> str:
    return "\n".join(render_row(s) for s in report.summaries.values())


def _parser():
    p = argparse.ArgumentParser(prog="cpdpmf", description="Grid-filter terrain navigation benchmark.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the Monte-Carlo benchmark")
    run.add_argument("--config", help="scenario JSON file (built-in scenario if omitted)")
    run.add_argument("--out", help="output directory (overrides the config's 'out')")
    run.add_argument("--filters", help="comma-separated roster, e.g. lgbf_cpd,ukf")
    run.add_argument("--mc", type=int, help="number of Monte-Carlo runs")
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--paper-scale", action="store_true",
                     help="101^4 grid for lgbf_cpd and 51x51x41x41 for lgbf (slow)")
    run.add_argument("--quiet", action="store_true", help="suppress per-run progress")
    sub.add_parser("show-default", help="print the built-in scenario JSON")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "show-default":
        print(json.dumps(default_scenario(), indent=2))
        return EXIT_OK
    try:
        cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig.from_dict({})
        roster = None
        if args.filters is not None:
            roster = [f.strip() for f in args.filters.split(",") if f.strip()]
        cfg = cfg.with_overrides(roster, args.mc, args.seed, args.out, args.paper_scale)
        log = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
        report = run_benchmark(cfg, log=log)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    emit_artifacts(report, cfg.out)
    print(render_table(report))
    total = sum(len(r.results) for r in report.runs)
    if total and all(res.diverged for r in report.runs for res in r.results.values()):
        print("all filters diverged in every run", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK
