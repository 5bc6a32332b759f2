"""
Running a configured experiment
===============================

Configs are plain dicts (or JSON files); every run writes ``summary.csv``
with one machine-checkable row per metric.
"""
import tempfile
from pathlib import Path

from jsqd.experiments import parse_config, run_experiment

cfg = parse_config({"experiment": "fixed-point", "N_grid": [500, 2000], "d_rule": "pow:0.5"})
out = Path(tempfile.mkdtemp())
rep = run_experiment(cfg, out)
print((out / "summary.csv").read_text())
print("passed:", rep.passed, "exit code:", rep.exit_code)

# %%
# The N=500 row fails its level-2 tolerance: with d=23 a fraction 0.9**23 ~ 0.09
# of arrivals see no idle server among the samples, so queues of length 2 build
# up. At N=2000 (d=45) that fraction drops below 0.01.
