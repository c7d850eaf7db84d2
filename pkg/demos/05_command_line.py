"""
The whole pipeline from the command line
========================================

generate -> sysid -> plan -> track -> report, driven through ``gpmpc.cli.main``
exactly as the ``gpmpc`` console script would run it.
"""

# %%
import json
import tempfile
from pathlib import Path

from gpmpc import cli

work = Path(tempfile.mkdtemp(prefix="gpmpc-demo-"))
config = {"seed": 1, "sweep": {"f_step": 2.0, "alpha_step_deg": 3.0}, "scenario": {"duration": 5.0}}
(work / "run.json").write_text(json.dumps(config))
(work / "world.json").write_text(json.dumps({
    "bounds": [0, 0, 200, 200],
    "obstacles": [{"c": [60, 60], "r": 20}, {"c": [130, 120], "r": 25}],
    "clearance": 4.0,
}))
cfg = str(work / "run.json")

# %%
assert cli.main(["generate", "--config", cfg, "--out", str(work / "gen")]) == 0
assert cli.main(["sysid", str(work / "gen" / "sweep.csv"), "--config", cfg, "--out", str(work / "model")]) == 0
assert cli.main(["plan", str(work / "world.json"), "--start", "10", "10", "--goal", "190", "190",
                 "--config", cfg, "--out", str(work / "plan")]) == 0
assert cli.main(["track", str(work / "model"), "--config", cfg, "--baseline", "--out", str(work / "circle")]) == 0
assert cli.main(["track", str(work / "model"), "--path", str(work / "plan" / "path.csv"),
                 "--world", str(work / "world.json"), "--config", cfg, "--out", str(work / "clutter")]) == 0
assert cli.main(["report", str(work / "circle" / "summary.json"), str(work / "clutter" / "summary.json"),
                 "-o", str(work / "report.csv")]) == 0

# %%
print((work / "report.csv").read_text())
print("outputs in", work)
