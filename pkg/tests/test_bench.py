import csv
import json

import numpy as np
import pytest

from cpdpmf import bench, tan
from cpdpmf.bench import FilterSummary, ScenarioConfig, emit_artifacts, main, parse_row, render_row, run_benchmark
from cpdpmf.errors import ConfigError

SMALL_GRID = {"counts": [9, 9, 7, 7], "max_rank": 5}


def small_doc(**over):
    doc = {
        "terrain": {"seed": 1, "extent": 3000.0, "n_hills": 300},
        "steps": 8,
        "initial": {"mean": [1500.0, 1500.0, 5.0, 3.0], "std": [40.0, 40.0, 0.5, 0.5]},
        "filters": {"lgbf_cpd": dict(SMALL_GRID), "lgbf": dict(SMALL_GRID), "pf": {"n_particles": 500}, "ukf": {}},
        "mc_runs": 2,
        "seed": 11,
    }
    doc.update(over)
    return doc


@pytest.fixture(scope="module")
def small_report():
    return run_benchmark(ScenarioConfig.from_dict(small_doc()))


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestConfig:

    def test_default_is_valid(self):
        cfg = ScenarioConfig.from_dict({})
        assert cfg.mc_runs == 10 and cfg.steps == 100
        assert list(cfg.filters) == ["lgbf_cpd", "lgbf", "pf", "ukf"]
        assert cfg.filter_settings("lgbf_cpd").counts == (21, 21, 21, 21)

    def test_round_trip(self):
        cfg = ScenarioConfig.from_dict(small_doc())
        assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg

    def test_json_syntax_error_has_line(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "steps": 10,\n  "mc_runs": ,\n}\n')
        with pytest.raises(ConfigError, match=r"bad\.json:3:\d+"):
            ScenarioConfig.load(path)

    @pytest.mark.parametrize("doc, field", [
        ({"mc_runs": 0}, "mc_runs"),
        ({"steps": "ten"}, "steps"),
        ({"colour": 1}, "colour"),
        ({"initial": {"mean": [0, 0, 0], "std": [1, 1, 1, 1]}}, "initial.mean"),
        ({"initial": {"mean": [0, 0, 0, 0], "std": [1, 0, 1, 1]}}, "initial.std"),
        ({"r_diag": [1, 1, -1]}, "r_diag"),
        ({"filters": {"kalman": {}}}, "kalman"),
        ({"filters": {"lgbf_cpd": {"counts": [8, 9, 9, 9]}}}, "filters.lgbf_cpd"),
        ({"filters": {"pf": {"particles": 3}}}, "filters.pf"),
        ({"terrain": {"height": 3}}, "terrain"),
    ])
    def test_field_diagnostics(self, doc, field):
        with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
            ScenarioConfig.from_dict(doc)

    def test_missing_dem(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"terrain": {"dem_path": "nowhere.asc"}}))
        with pytest.raises(ConfigError, match="dem_path"):
            ScenarioConfig.load(path)

    def test_overrides(self):
        cfg = ScenarioConfig.from_dict(small_doc())
        out = cfg.with_overrides(filters=["ukf", "lgbf_cpd"], mc_runs=3, seed=5, out="x")
        assert list(out.filters) == ["ukf", "lgbf_cpd"]
        assert (out.mc_runs, out.seed, out.out) == (3, 5, "x")
        assert out.filters["lgbf_cpd"] == SMALL_GRID
        big = cfg.with_overrides(paper_scale=True)
        assert big.filter_settings("lgbf_cpd").counts == (101,) * 4
        assert big.filter_settings("lgbf").counts == (51, 51, 41, 41)
        with pytest.raises(ConfigError):
            cfg.with_overrides(filters=["nope"])


class TestRunBenchmark:

    def test_identical_inputs_across_filters(self, small_report):
        for rec in small_report.runs:
            hashes = {res.input_hash for res in rec.results.values()}
            assert hashes == {rec.input_hash}

    def test_run_seeds_distinct_and_reproducible(self, small_report):
        seeds = [rec.seed for rec in small_report.runs]
        assert len(set(seeds)) == len(seeds)
        assert seeds[0] == bench.run_seed(11, 0)

    def test_timing_per_step(self, small_report):
        for rec in small_report.runs:
            for res in rec.results.values():
                assert len(res.step_times) == 8
                assert all(t >= 0 for t in res.step_times)

    def test_grid_filters_conserve_mass(self, small_report):
        for name in ("lgbf_cpd", "lgbf"):
            assert small_report.summaries[name].max_mass_error < 1e-9
        assert small_report.summaries["ukf"].max_mass_error is None

    def test_aggregation_matches_definition(self, small_report):
        for name, s in small_report.summaries.items():
            err = np.concatenate([r.results[name].estimates - r.truth for r in small_report.runs])
            assert s.rmse_pos_m == pytest.approx(np.sqrt(np.mean(err[:, 0] ** 2 + err[:, 1] ** 2)), rel=1e-12)
            assert s.rmse_vel_mps == pytest.approx(np.sqrt(np.mean(err[:, 2] ** 2 + err[:, 3] ** 2)), rel=1e-12)
            assert s.divergences == 0

    def test_noiseless_cpd_below_one_cell(self):
        doc = small_doc(q_diag=[0.0, 0.0, 0.0, 0.0], r_diag=[0.25, 1e-4, 1e-4], mc_runs=1, steps=30,
                        filters={"lgbf_cpd": {"counts": [21, 21, 21, 21]}})
        doc["initial"]["std"] = [20.0, 20.0, 0.2, 0.2]
        # narrow hills make the height profile informative
        doc["terrain"]["width_range"] = [60.0, 300.0]
        rep = run_benchmark(ScenarioConfig.from_dict(doc))
        cell = 4.0 * 20.0 / 10
        assert rep.summaries["lgbf_cpd"].rmse_pos_m < cell

    def test_divergence_is_recorded(self):
        doc = small_doc(r_diag=[1e-12, 0.09, 0.09], filters={"lgbf_cpd": dict(SMALL_GRID), "ukf": {}}, mc_runs=1)
        rep = run_benchmark(ScenarioConfig.from_dict(doc))
        s = rep.summaries["lgbf_cpd"]
        assert s.divergences == 1 and np.isnan(s.rmse_pos_m)
        assert rep.runs[0].results["lgbf_cpd"].error.startswith("step 0")


class TestArtifacts:

    def test_files_and_parse_back(self, small_report, tmp_path):
        paths = emit_artifacts(small_report, tmp_path)
        assert (tmp_path / "report.json").is_file()
        traces = sorted(p.name for p in (tmp_path / "traces").iterdir())
        assert len(traces) == 2 * 4
        assert "run_1_lgbf_cpd.csv" in traces
        assert len(paths) == 2 + len(traces)

        rows = read_csv(tmp_path / "summary.csv")
        assert rows[0] == ["name", "rmse_pos_m", "rmse_vel_mps", "mean_step_s", "divergences"]
        assert [r[0] for r in rows[1:]] == ["lgbf_cpd", "lgbf", "pf", "ukf"]
        assert all(len(r) == 5 for r in rows)

    def test_aggregation_from_traces(self, small_report, tmp_path):
        emit_artifacts(small_report, tmp_path)
        summary = {r[0]: r for r in read_csv(tmp_path / "summary.csv")[1:]}
        for name in small_report.summaries:
            err = []
            for i in range(2):
                t = np.array(read_csv(tmp_path / "traces" / f"run_{i}_{name}.csv")[1:], dtype=float)
                err.append(t[:, 5:9] - t[:, 1:5])
            err = np.concatenate(err)
            assert float(summary[name][1]) == pytest.approx(np.sqrt(np.mean(np.sum(err[:, :2] ** 2, 1))), rel=1e-12)
            assert float(summary[name][2]) == pytest.approx(np.sqrt(np.mean(np.sum(err[:, 2:] ** 2, 1))), rel=1e-12)

    def test_empty_roster(self, tmp_path):
        rep = run_benchmark(ScenarioConfig.from_dict(small_doc(filters={}, mc_runs=1)))
        emit_artifacts(rep, tmp_path)
        assert read_csv(tmp_path / "summary.csv") == [bench.SUMMARY_HEADER]
        assert list((tmp_path / "traces").iterdir()) == []

    def test_two_filters_two_runs(self, tmp_path):
        doc = small_doc(filters={"ukf": {}, "pf": {"n_particles": 200}})
        emit_artifacts(run_benchmark(ScenarioConfig.from_dict(doc)), tmp_path)
        assert len(list((tmp_path / "traces").iterdir())) == 4

    def test_report_json_deterministic(self, tmp_path):
        cfg = ScenarioConfig.from_dict(small_doc())
        emit_artifacts(run_benchmark(cfg), tmp_path / "a")
        emit_artifacts(run_benchmark(cfg), tmp_path / "b")
        assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
        report = json.loads((tmp_path / "a" / "report.json").read_text())
        assert set(report["filters"]) == {"lgbf_cpd", "lgbf", "pf", "ukf"}
        assert len(report["runs"]) == 2

    def test_unwritable(self, tmp_path, small_report):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError, match="file"):
            emit_artifacts(small_report, blocker / "sub")


class TestTableRows:

    def test_reference_row(self):
        assert parse_row("LGbF CPD 14.13 m, 0.80 m/s, 0.06 s") == ("LGbF CPD", 14.13, 0.80, 0.06)

    def test_render(self):
        s = FilterSummary("lgbf_cpd", 14.1312, 0.8049, 0.0611, 0)
        assert render_row(s) == "LGbF CPD 14.13 m, 0.80 m/s, 0.06 s"
        assert parse_row(render_row(FilterSummary("ukf", 290.97, 4.2, 0.0004, 0))) == ("UKF", 290.97, 4.2, 0.0)

    def test_reject(self):
        with pytest.raises(ValueError):
            parse_row("LGbF CPD 14.13 m 0.80 m/s")


class TestCli:

    def test_run(self, tmp_path, capsys):
        cfg = tmp_path / "scenario.json"
        cfg.write_text(json.dumps(small_doc()))
        code = main(["run", "--config", str(cfg), "--out", str(tmp_path / "out"), "--filters", "ukf,lgbf_cpd",
                     "--mc", "1", "--seed", "3", "--quiet"])
        assert code == 0
        out = capsys.readouterr().out.splitlines()
        assert [parse_row(line)[0] for line in out] == ["UKF", "LGbF CPD"]
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["config"]["seed"] == 3 and report["config"]["mc_runs"] == 1

    def test_dem_scenario(self, tmp_path):
        tan.write_esri_ascii(tan.synth_terrain(seed=2, extent=3000.0, n_hills=200), tmp_path / "dem.asc")
        doc = small_doc(terrain={"dem_path": "dem.asc"}, filters={"ukf": {}}, mc_runs=1)
        (tmp_path / "scenario.json").write_text(json.dumps(doc))
        code = main(["run", "--config", str(tmp_path / "scenario.json"), "--out", str(tmp_path / "o"), "--quiet"])
        assert code == 0

    def test_config_error_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "scenario.json"
        cfg.write_text('{"mc_runs": 0}')
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2
        assert "mc_runs" in capsys.readouterr().err
        assert main(["run", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
        assert main(["run", "--filters", "bogus", "--out", str(tmp_path)]) == 2

    def test_universal_divergence_exit_code(self, tmp_path):
        cfg = tmp_path / "scenario.json"
        cfg.write_text(json.dumps(small_doc(r_diag=[1e-12, 0.09, 0.09], filters={"lgbf_cpd": dict(SMALL_GRID)},
                                            mc_runs=1)))
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 3

    def test_show_default(self, capsys):
        assert main(["show-default"]) == 0
        assert json.loads(capsys.readouterr().out) == bench.default_scenario()
