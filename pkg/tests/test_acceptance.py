"""Acceptance gate.

Each test prints one ``[PASS]``/``[FAIL]`` line with the measured value
and the threshold, then asserts.  Run alone with::

    pytest tests/test_acceptance.py -v
"""
import time

import numpy as np
import pytest

from cpdpmf import cpd, tan
from cpdpmf.bench import ScenarioConfig, emit_artifacts, run_benchmark
from cpdpmf.filters import (CpdFilterConfig, FilterStateCpd, FilterStateFull, advect_cpd, advect_full,
                            diffuse_cpd, diffuse_full, init_cpd_state, init_full_state, lgbf_cpd_step,
                            lgbf_full_step, measurement_update_cpd, measurement_update_full, predictive_grid)
from cpdpmf.grid import GaussianMoments, Pmd, design_grid, normalize

from conftest import random_cpd
from test_filters import _PositionOnlyModel


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, text):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {text}")
        assert ok, text
    return emit


def outer_dense(t):
    """Dense tensor via explicit outer products, independent of einsum."""
    out = np.zeros(t.shape)
    for r in range(t.rank):
        term = np.array(t.lambdas[r])
        for f in t.factors:
            term = np.multiply.outer(term, f[:, r])
        out += term
    return out


def test_criterion_1_cpd_algebra(verdict):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    rank_ok = True
    for _ in range(120):
        d = int(rng.integers(1, 5))
        shape = tuple(int(n) for n in rng.integers(1, 9, size=d))
        a = random_cpd(rng, shape, int(rng.integers(1, 5)))
        b = random_cpd(rng, shape, int(rng.integers(1, 5)))
        da, db = outer_dense(a), outer_dense(b)
        h = cpd.hadamard(a, b)
        rank_ok &= h.rank == a.rank * b.rank
        scale = max(np.max(np.abs(da)), 1e-300)
        worst = max(worst, np.max(np.abs(cpd.to_dense(a) - da)) / scale)
        ref = da * db
        worst = max(worst, np.max(np.abs(cpd.to_dense(h) - ref)) / max(np.max(np.abs(ref)), 1e-300))
        worst = max(worst, abs(cpd.sum_entries(a) - da.sum()) / max(np.abs(da).sum(), 1e-300))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-10 and rank_ok and elapsed < 10
    verdict(1, ok, f"120 cases, max rel err {worst:.2e} (< 1e-10), rank product exact={rank_ok}, "
                   f"{elapsed:.1f} s (< 10 s)")


def test_criterion_2_als_recovery(verdict):
    successes = 0
    sweeps = []
    for trial in range(50):
        rng = np.random.default_rng(1000 + trial)
        rank = int(rng.integers(1, 6))
        shape = tuple(int(n) for n in rng.integers(rank + 1, 21, size=4))
        t = random_cpd(rng, shape, rank)
        frac = rng.uniform(0.2, 0.8, size=rank)
        # same tensor, written with twice as many terms
        redundant = cpd.cpd_new(np.r_[frac * t.lambdas, (1 - frac) * t.lambdas],
                                [np.hstack([f, f]) for f in t.factors])
        out, info = cpd.rank_reduce_als(redundant, rank, max_iters=50, tol=1e-14, seed=trial, return_info=True)
        ref = cpd.to_dense(t)
        err = np.linalg.norm(cpd.to_dense(out) - ref) / np.linalg.norm(ref)
        sweeps.append(info.iterations)
        successes += err < 1e-6 and info.iterations <= 50
    ok = successes >= 48
    verdict(2, ok, f"{successes}/50 trials recovered to < 1e-6 (need >= 48), max sweeps {max(sweeps)}")


def _random_posterior(rng, counts):
    mean = np.array([1500.0, 1500.0, 4.0, -2.0]) + rng.normal(0, [50, 50, 1, 1])
    std = rng.uniform([20, 20, 0.5, 0.5], [80, 80, 2, 2])
    grid = design_grid(GaussianMoments.diagonal(mean, std), 4.0, counts)
    return normalize(Pmd(grid, random_cpd(rng, counts, int(rng.integers(1, 5)), positive=True)))


def test_criterion_3_filter_step_oracle(verdict):
    counts = (9, 9, 7, 7)
    cfg = CpdFilterConfig(counts=counts, max_rank=1_000_000, svd_energy=1.0)
    terrain = tan.synth_terrain(seed=5, extent=3000.0, n_hills=300)
    model = tan.TanModel(tan.CvModel.nearly_constant_velocity(), tan.MeasModel(), terrain)
    start = time.perf_counter()
    worst = {"update": 0.0, "advection": 0.0, "diffusion": 0.0}

    def rel(state_cpd, state_full):
        ref = state_full.pmd.weights
        return np.max(np.abs(cpd.to_dense(state_cpd.pmd.weights) - ref)) / np.max(np.abs(ref))

    for i in range(20):
        rng = np.random.default_rng(300 + i)
        s = FilterStateCpd(_random_posterior(rng, counts))
        d = FilterStateFull(Pmd(s.grid, cpd.to_dense(s.pmd.weights)))
        z = np.array([float(terrain.sample(*s.grid.center[:2])) + rng.normal(0, 3), 4.0, -1.0])
        psi = rng.uniform(-np.pi, np.pi)
        worst["update"] = max(worst["update"], rel(measurement_update_cpd(s, z, psi, model, cfg, round_rank=False),
                                                   measurement_update_full(d, z, psi, model)))
        g = predictive_grid(s.pmd, model.dynamics, cfg)
        worst["advection"] = max(worst["advection"],
                                 rel(advect_cpd(s, model.dynamics, cfg, new_grid=g, round_rank=False),
                                     advect_full(d, model.dynamics, cfg, new_grid=g)))
        worst["diffusion"] = max(worst["diffusion"], rel(diffuse_cpd(s, model.dynamics),
                                                         diffuse_full(d, model.dynamics)))
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) < 1e-6 and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    verdict(3, ok, f"20 posteriors on 9x9x7x7, max rel err {detail} (< 1e-6), {elapsed:.1f} s (< 60 s)")


def test_criterion_4_brr_quadrature(verdict):
    model = _PositionOnlyModel(q=(0.4, 0.9), sigma=1.5)
    cfg = CpdFilterConfig(counts=(31, 31), grid_policy="fixed")
    m0 = GaussianMoments.diagonal([1.0, -0.5], [2.0, 3.0])
    state = init_full_state(m0, cfg)
    grid = state.grid
    pts = grid.points()
    q = np.diag(model.dynamics.Q)
    diff = pts[:, None, :] - pts[None, :, :]
    transition = np.prod(np.exp(-0.5 * diff ** 2 / q) / np.sqrt(2 * np.pi * q), axis=2)
    p = np.exp(-0.5 * np.sum((pts - m0.mean) ** 2 / np.diag(m0.cov), axis=1))
    p /= p.sum() * grid.volume
    rng = np.random.default_rng(1)
    truth = np.array([2.0, 1.0])
    worst = 0.0
    for _ in range(10):
        z = model.h(*truth) + rng.normal(0, 1.5)
        post = np.exp(-0.5 * (z - model.h(pts[:, 0], pts[:, 1])) ** 2 / 1.5 ** 2) * p
        post /= post.sum() * grid.volume
        p = grid.volume * transition @ post
        p /= p.sum() * grid.volume
        state, _ = lgbf_full_step(state, z, 0.0, model, cfg)
        worst = max(worst, np.max(np.abs(state.pmd.weights.ravel() - p)) / p.max())
        truth = truth + rng.normal(0, np.sqrt(q))
    verdict(4, worst < 1e-10, f"31x31 grid, 10 steps, max rel deviation from direct sums {worst:.1e} (< 1e-10)")


@pytest.fixture(scope="module")
def default_run():
    cfg = ScenarioConfig.from_dict({}).with_overrides(filters=["lgbf_cpd", "lgbf", "ukf"])
    start = time.perf_counter()
    report = run_benchmark(cfg)
    return cfg, report, time.perf_counter() - start


def test_criterion_5_estimation_parity(verdict, default_run):
    cfg, report, elapsed = default_run
    s = report.summaries
    c, f, u = s["lgbf_cpd"].rmse_pos_m, s["lgbf"].rmse_pos_m, s["ukf"].rmse_pos_m
    ratio = c / f
    ok = abs(ratio - 1) <= 0.25 and c < u and f < u and elapsed < 300
    verdict(5, ok, f"position RMSE CPD {c:.1f} m, full {f:.1f} m (ratio {ratio:.2f}, within 25%), "
                   f"UKF {u:.1f} m (must exceed both), {cfg.mc_runs} runs x {cfg.steps} steps in {elapsed:.0f} s "
                   f"(< 300 s)")


def _mean_step(step, state, model, cfg, z, psi, repeats):
    times = []
    for k in range(repeats):
        t0 = time.perf_counter()
        state, _ = step(state, z[k], psi[k], model, cfg)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def test_criterion_6_scaling(verdict):
    terrain = tan.synth_terrain()
    model = tan.TanModel(tan.CvModel.nearly_constant_velocity(), tan.MeasModel(), terrain)
    m0 = GaussianMoments.diagonal([3000.0, 3000.0, 8.0, 5.0], [100.0, 100.0, 1.0, 1.0])
    traj = tan.simulate(model.dynamics, model.meas, terrain, [3050.0, 2900.0, 8.5, 4.5], 4, seed=0)
    times = {}
    start = time.perf_counter()
    for n in (21, 41):
        cfg = CpdFilterConfig(counts=(n,) * 4, max_rank=10)
        times["cpd", n] = _mean_step(lgbf_cpd_step, init_cpd_state(m0, cfg), model, cfg,
                                     traj.measurements, traj.headings, 4)
        times["full", n] = _mean_step(lgbf_full_step, init_full_state(m0, cfg), model, cfg,
                                      traj.measurements, traj.headings, 3)
    elapsed = time.perf_counter() - start
    rc = times["cpd", 41] / times["cpd", 21]
    rf = times["full", 41] / times["full", 21]
    ok = rc < 4 and rf > 8 and elapsed < 600
    verdict(6, ok, f"N 21->41: CPD step {times['cpd', 21]:.3f}->{times['cpd', 41]:.3f} s (x{rc:.1f}, < 4), "
                   f"full {times['full', 21]:.3f}->{times['full', 41]:.3f} s (x{rf:.1f}, > 8), {elapsed:.0f} s")


def test_criterion_7_conservation(verdict, default_run):
    _, report, _ = default_run
    worst = max(report.summaries[n].max_mass_error for n in ("lgbf_cpd", "lgbf"))
    violations = sum(1 for r in report.runs for n in ("lgbf_cpd", "lgbf")
                     if r.results[n].max_mass_error is None or r.results[n].max_mass_error > 1e-9)
    verdict(7, violations == 0, f"max |delta*sum P - 1| over all grid-filter states {worst:.1e} (< 1e-9), "
                                f"violations {violations}")


def test_criterion_8_determinism(verdict, default_run, tmp_path):
    cfg, report, _ = default_run
    emit_artifacts(report, tmp_path / "first")
    emit_artifacts(run_benchmark(cfg), tmp_path / "second")
    a = (tmp_path / "first" / "report.json").read_bytes()
    b = (tmp_path / "second" / "report.json").read_bytes()
    verdict(8, a == b, f"repeated default scenario report.json byte-identical: {a == b} ({len(a)} bytes)")
