"""A short Evo-RL run next to plain Q-learning at 30% rewardless states.

Ten generations of 30 agents (3,000 learning episodes) take a minute or so on
one core. The desk-scale comparison is ``evorl run --preset desk``.
"""

import time

from evorl.engine import EngineConfig, make_run
from evorl.gp import GPConfig

budget = 3000

cfg = EngineConfig(env="cartpole", mode="evo-rl", fraction=0.3, gp=GPConfig(generations=10), budget=budget, seed=4)
t0 = time.time()
for rec in make_run(cfg):
    print(f"gen {rec.generation:2d}  evals {rec.evaluations:5d}  best {rec.best_fitness:6.1f}  "
          f"mean {rec.mean_fitness:6.1f}  instinct {rec.instinct_ratio:.2f}")
print(f"{time.time() - t0:.0f} s; champion tree: {rec.best_tree}")

rl = EngineConfig(env="cartpole", mode="rl-only", fraction=0.3, budget=budget, seed=4)
for rec in make_run(rl):
    pass
print(f"Q-learning alone after {rec.evaluations} episodes: best eval {rec.best_fitness:.1f}")
