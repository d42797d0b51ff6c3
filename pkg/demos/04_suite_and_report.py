"""Multi-trial suites and the comparison table, from Python.

Same as
    evorl run --env cartpole --fraction 0.0 --trials 2 --generations 3 --out runs/eq
    evorl run --mode rl-only --trials 2 --budget 900 --out runs/q
    evorl report runs
"""

from pathlib import Path

from evorl.harness import load_config, report, run_suite

root = Path("runs")
run_suite(load_config(trials=2, generations=3, seed=1), root / "eq")
run_suite(load_config(mode="rl-only", trials=2, budget=900, seed=1), root / "q")

print(report([root], out=root).text())
print((root / "eq" / "trial_00.csv").read_text())
