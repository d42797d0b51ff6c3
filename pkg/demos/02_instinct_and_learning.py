"""One agent's life: a behavior-tree instinct on top of a Q-learner.

The tree decides on some states; everywhere else the learner acts and learns.
Steps the instinct takes never reach the learner.
"""

import numpy as np

from evorl import behavior_tree as bt
from evorl.classic_control import CartPole
from evorl.engine import Agent, infancy, maturity_eval
from evorl.learners import LearnerConfig, QTable
from evorl.masking import MaskedEnv

# "if the pole falls right fast, push right"
tree = bt.parse_sexpr("(seq (cond 3 >= 0.8) (act 1))")
print(bt.to_sexpr(tree), "depth", bt.depth(tree))

for obs in [(0, 0, 0, 1.2), (0, 0, 0, -0.2)]:
    r = bt.tick(tree, obs)
    print(obs, "->", r.signal.name, r.chosen_action)

env = MaskedEnv.create("cartpole", fraction=0.3, seed=1)
agent = Agent(0, tree, QTable(env.grid.total_bins, 2))
steps = []
infancy(agent, env, LearnerConfig(), np.random.default_rng(2), episodes=50, on_step=steps.append)

print("infancy steps", agent.total_steps, "by instinct", agent.instinct_steps)
print("learner updates", agent.learner_updates)
print("steps with no reward", sum(not s.reward_present for s in steps))

# fitness: 100 greedy episodes on fixed starts with the true reward
starts = CartPole().sample_initial_states(np.random.default_rng(3), 100)
maturity_eval(agent, CartPole(), env.grid, starts)
print("fitness", agent.fitness, "eval instinct ratio", round(agent.instinct_ratio(), 3))
