# %% [markdown]
# # A small Monte Carlo benchmark
#
# The harness runs every filter on the same simulated measurements, then
# writes a summary table, per-run traces and a deterministic JSON report.

# %%
import tempfile
from pathlib import Path

from cpdpmf.bench import ScenarioConfig, emit_artifacts, render_table, run_benchmark

doc = {
    "terrain": {"seed": 1, "extent": 3000.0, "n_hills": 300},
    "steps": 15,
    "initial": {"mean": [1500.0, 1500.0, 6.0, 4.0], "std": [50.0, 50.0, 1.0, 1.0]},
    "filters": {
        "lgbf_cpd": {"counts": [15, 15, 11, 11], "max_rank": 8},
        "lgbf": {"counts": [15, 15, 11, 11]},
        "pf": {"n_particles": 5000},
        "ukf": {},
    },
    "mc_runs": 3,
    "seed": 4,
}
cfg = ScenarioConfig.from_dict(doc)
report = run_benchmark(cfg, log=print)

# %% [markdown]
# ## Table and artifacts

# %%
print(render_table(report))
with tempfile.TemporaryDirectory() as tmp:
    for path in emit_artifacts(report, Path(tmp) / "out"):
        print(Path(path).relative_to(tmp))
