"""Rewardless states on CartPole.

The state box is cut into 4 x 4 x 4 x 4 = 256 cells and a seeded 30% of
them stop paying reward. The dynamics don't change, only the feedback.
Run with ``python demos/01_rewardless_states.py``.
"""

import numpy as np

from evorl.masking import MaskedEnv, bin_index, mask_to_json

env = MaskedEnv.create("cartpole", fraction=0.3, seed=7)
print("cells:", env.grid.total_bins, "rewardless:", len(env.mask))

# where do the cell edges sit along the pole angle axis?
print("theta edges:", np.round(env.grid.edges[2], 3))

# a random policy for one episode; count the steps whose reward was withheld
rng = np.random.default_rng(0)
obs = env.reset(rng)
seen, withheld = [], 0
while True:
    seen.append(bin_index(env.grid, obs))
    out = env.step(int(rng.integers(2)))
    withheld += out.reward is None
    obs = out.observation
    if out.done:
        break

print(f"episode length {len(seen)}, withheld rewards {withheld}, true return {env.true_episode_return}")
print("distinct cells visited:", len(set(seen)))

# the mask is plain JSON, so a run's rewardless set can be archived
print(mask_to_json("cartpole", env.grid, env.mask)[:120], "...")
