"""State-space binning and rewardless-state masking.

A :class:`BinGrid` partitions the (clipped) observation box into
equal-width cells indexed in row-major order. A :class:`RewardlessMask`
marks a seeded subset of those cells; :class:`MaskedEnv` withholds the
reward whenever the state an action is taken from lies in a marked cell.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .classic_control import ControlEnv, EnvSpec, Observation, make_env
from .errors import InvalidArgumentError, ProtocolError

MAX_FRACTION = 0.5


@dataclass(frozen=True)
class BinGrid:
    bins_per_dim: tuple[int, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    edges: tuple[tuple[float, ...], ...] = field(init=False, repr=False, compare=False)
    # edges without the outer two: bisecting these clamps to the boundary cells for free
    _interior: tuple = field(init=False, repr=False, compare=False)
    _interior_arrays: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.bins_per_dim)
        if not (len(self.lower) == len(self.upper) == n) or n == 0:
            raise InvalidArgumentError("bins_per_dim, lower and upper must have equal non-zero length")
        for b, lo, hi in zip(self.bins_per_dim, self.lower, self.upper):
            if int(b) != b or b < 1:
                raise InvalidArgumentError(f"bins per dimension must be positive integers, got {b!r}")
            if not lo < hi:
                raise InvalidArgumentError(f"lower bound {lo} must be below upper bound {hi}")
        edges = tuple(
            tuple(float(e) for e in np.linspace(lo, hi, b + 1))
            for b, lo, hi in zip(self.bins_per_dim, self.lower, self.upper)
        )
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "_interior", tuple(e[1:-1] for e in edges))
        object.__setattr__(self, "_interior_arrays", tuple(np.asarray(e[1:-1]) for e in edges))

    @classmethod
    def for_spec(cls, spec: EnvSpec, bins_per_dim: Sequence[int] | None = None) -> "BinGrid":
        bins = tuple(int(b) for b in (bins_per_dim or spec.default_bins))
        if len(bins) != spec.state_dim:
            raise InvalidArgumentError(
                f"{spec.name} has {spec.state_dim} dimensions, got {len(bins)} bin counts"
            )
        return cls(bins, tuple(spec.obs_lower), tuple(spec.obs_upper))

    @property
    def dims(self) -> int:
        return len(self.bins_per_dim)

    @property
    def total_bins(self) -> int:
        return math.prod(self.bins_per_dim)

    def cell_bounds(self, index: int) -> list[tuple[float, float]]:
        """Per-dimension ``[low, high)`` interval of a flat cell index."""
        coords = np.unravel_index(index, self.bins_per_dim)
        return [(e[k], e[k + 1]) for e, k in zip(self.edges, coords)]


def bin_index(grid: BinGrid, obs: Sequence[float]) -> int:
    """Row-major cell index of ``obs``; out-of-box values fall into the boundary cell."""
    if len(obs) != grid.dims:
        raise InvalidArgumentError(f"observation has {len(obs)} entries, grid expects {grid.dims}")
    index = 0
    for v, n, inner in zip(obs, grid.bins_per_dim, grid._interior):
        if not math.isfinite(v):
            raise InvalidArgumentError(f"non-finite observation value {v!r}")
        index = index * n + bisect_right(inner, v)
    return index


def bin_index_batch(grid: BinGrid, obs: np.ndarray) -> np.ndarray:
    """Vectorized :func:`bin_index` over rows of an ``(n, dims)`` array."""
    obs = np.asarray(obs, dtype=float)
    if obs.ndim != 2 or obs.shape[1] != grid.dims:
        raise InvalidArgumentError(f"expected shape (n, {grid.dims}), got {obs.shape}")
    index = np.zeros(obs.shape[0], dtype=np.int64)
    for d, (n, inner) in enumerate(zip(grid.bins_per_dim, grid._interior_arrays)):
        index = index * n + np.searchsorted(inner, obs[:, d], side="right")
    return index


@dataclass(frozen=True)
class RewardlessMask:
    masked: frozenset
    fraction: float
    seed: int
    total_bins: int

    def __contains__(self, index: int) -> bool:
        return index in self.masked

    def __len__(self) -> int:
        return len(self.masked)

    def as_array(self) -> np.ndarray:
        """Boolean lookup table of length ``total_bins``."""
        out = np.zeros(self.total_bins, dtype=bool)
        out[sorted(self.masked)] = True
        return out


def mask_size(total_bins: int, fraction: float) -> int:
    # Guard against 0.3 * 256 style products landing a hair under an integer.
    return int(math.floor(round(fraction * total_bins, 9)))


def build_mask(grid: BinGrid | int, fraction: float, seed: int) -> RewardlessMask:
    """Choose ``floor(fraction * total_bins)`` cells by a seeded partial Fisher-Yates shuffle."""
    total = grid if isinstance(grid, int) else grid.total_bins
    if not (0.0 <= fraction <= MAX_FRACTION):
        raise InvalidArgumentError(f"fraction must lie in [0, {MAX_FRACTION}], got {fraction!r}")
    m = mask_size(total, fraction)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & (2**64 - 1))))
    pool = list(range(total))
    for i in range(m):
        j = int(rng.integers(i, total))
        pool[i], pool[j] = pool[j], pool[i]
    return RewardlessMask(frozenset(pool[:m]), float(fraction), int(seed), total)


def mask_to_json(env_name: str, grid: BinGrid, mask: RewardlessMask) -> str:
    return json.dumps(
        {
            "env": env_name,
            "bins_per_dim": list(grid.bins_per_dim),
            "fraction": mask.fraction,
            "seed": mask.seed,
            "masked_bins": sorted(mask.masked),
        },
        sort_keys=True,
    )


def mask_from_json(text: str) -> tuple[str, tuple[int, ...], RewardlessMask]:
    """Inverse of :func:`mask_to_json`; returns ``(env, bins_per_dim, mask)``."""
    data = json.loads(text)
    bins = tuple(int(b) for b in data["bins_per_dim"])
    total = math.prod(bins)
    masked = frozenset(int(i) for i in data["masked_bins"])
    if any(not 0 <= i < total for i in masked):
        raise InvalidArgumentError("masked bin index outside grid")
    return data["env"], bins, RewardlessMask(masked, float(data["fraction"]), int(data["seed"]), total)


@dataclass
class StepOutcome:
    observation: Observation
    reward: Optional[float]
    terminal: bool
    truncated: bool

    @property
    def done(self) -> bool:
        return self.terminal or self.truncated


class MaskedEnv:
    """A control environment that hides the reward in masked cells.

    The unmasked return of the current episode is kept in
    :attr:`true_episode_return` for evaluation code; learners only ever see
    :class:`StepOutcome`.
    """

    def __init__(self, env: ControlEnv, grid: BinGrid, mask: RewardlessMask):
        if mask.total_bins != grid.total_bins:
            raise InvalidArgumentError("mask and grid disagree on the number of bins")
        if grid.dims != env.spec.state_dim:
            raise InvalidArgumentError("grid dimensionality does not match the environment")
        self.env = env
        self.grid = grid
        self.mask = mask
        self._masked = mask.masked
        self._obs: Observation | None = None
        self._done = True
        self.true_episode_return = 0.0

    @classmethod
    def create(cls, env_name: str, fraction: float, seed: int, bins_per_dim=None) -> "MaskedEnv":
        env = make_env(env_name)
        grid = BinGrid.for_spec(env.spec, bins_per_dim)
        return cls(env, grid, build_mask(grid, fraction, seed))

    @property
    def spec(self) -> EnvSpec:
        return self.env.spec

    @property
    def observation(self) -> Observation | None:
        return self._obs

    def reset(self, rng: np.random.Generator | None = None, *, state=None) -> Observation:
        self._obs = self.env.reset(rng, state=state)
        self._done = False
        self.true_episode_return = 0.0
        return self._obs

    def is_masked(self, obs: Sequence[float]) -> bool:
        return bin_index(self.grid, obs) in self._masked

    def step(self, action: int) -> StepOutcome:
        if self._done:
            raise ProtocolError("step() called on a finished episode; call reset()")
        hidden = bin_index(self.grid, self._obs) in self._masked
        obs, reward, terminal, truncated = self.env.step(action)
        self.true_episode_return += reward
        self._obs = obs
        self._done = terminal or truncated
        return StepOutcome(obs, None if hidden else reward, terminal, truncated)


def masked_step(env: MaskedEnv, action: int) -> StepOutcome:
    return env.step(action)
