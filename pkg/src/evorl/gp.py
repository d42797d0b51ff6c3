"""Genetic programming over behavior trees.

Genotypes are the trees themselves. Variation operators never return a
tree that breaks the depth/size/arity limits; when a random draw would,
the draw is repeated a bounded number of times and the parent is returned
unchanged if every attempt fails.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import behavior_tree as bt
from .classic_control import EnvSpec
from .errors import InvalidArgumentError
from .learners import LearnedBehavior

REPAIR_ATTEMPTS = 8

BASIC_COMPOSITES = ("sel", "seq", "inv")
EXTENDED_COMPOSITES = ("sel", "seq", "inv", "rep", "ruf", "psel", "pseq")


@dataclass
class GPConfig:
    population_size: int = 30
    generations: int = 200
    tournament_k: int = 3
    crossover_rate: float = 0.5
    mutation_rate: float = 0.15
    inherited_mutation_rate: float = 0.2
    inherited_element_prob: float = 0.1
    inherited_sigma: float = 0.1
    max_depth: int = 6
    max_nodes: int = 64
    init_depth_range: tuple[int, int] = (2, 4)
    elitism: int = 1
    max_children: int = 3
    extended_primitives: bool = False

    def validate(self) -> None:
        for name in (
            "crossover_rate",
            "mutation_rate",
            "inherited_mutation_rate",
            "inherited_element_prob",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidArgumentError(f"{name} must lie in [0, 1], got {v!r}")
        if self.population_size < 1:
            raise InvalidArgumentError("population_size must be >= 1")
        if self.generations < 0:
            raise InvalidArgumentError("generations must be >= 0")
        if not 1 <= self.tournament_k <= self.population_size:
            raise InvalidArgumentError("tournament_k must lie in [1, population_size]")
        lo, hi = self.init_depth_range
        if not 1 <= lo <= hi <= self.max_depth:
            raise InvalidArgumentError("init_depth_range must satisfy 1 <= lo <= hi <= max_depth")
        if not 0 <= self.elitism <= self.population_size:
            raise InvalidArgumentError("elitism must lie in [0, population_size]")
        if self.inherited_sigma < 0:
            raise InvalidArgumentError("inherited_sigma must be non-negative")
        if self.max_children < 1 or self.max_nodes < 1:
            raise InvalidArgumentError("max_children and max_nodes must be positive")


@dataclass(frozen=True)
class PrimitiveSet:
    """Node vocabulary for random trees in one environment."""

    state_dim: int
    action_count: int
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    composites: tuple[str, ...] = BASIC_COMPOSITES
    max_children: int = 3
    repeat_range: tuple[int, int] = field(default=(2, 4))

    @classmethod
    def for_spec(cls, spec: EnvSpec, extended: bool = False, max_children: int = 3) -> "PrimitiveSet":
        return cls(
            spec.state_dim,
            spec.action_count,
            tuple(spec.obs_lower),
            tuple(spec.obs_upper),
            EXTENDED_COMPOSITES if extended else BASIC_COMPOSITES,
            max_children,
        )

    def __post_init__(self):
        if self.state_dim < 1 or self.action_count < 1:
            raise InvalidArgumentError("empty primitive set: no features or no actions")
        unknown = set(self.composites) - set(EXTENDED_COMPOSITES)
        if unknown:
            raise InvalidArgumentError(f"unknown composite kinds {sorted(unknown)}")


def random_terminal(rng: np.random.Generator, prims: PrimitiveSet) -> bt.Node:
    if rng.random() < 0.5:
        f = int(rng.integers(prims.state_dim))
        op = "<" if rng.random() < 0.5 else ">="
        return bt.Condition(f, op, float(rng.uniform(prims.lower[f], prims.upper[f])))
    return bt.Action(int(rng.integers(prims.action_count)))


def _random_composite(rng, prims, tag, make_child):
    if tag in ("inv", "ruf"):
        return (bt.Invert if tag == "inv" else bt.RepeatUntilFail)(make_child())
    if tag == "rep":
        lo, hi = prims.repeat_range
        return bt.Repeat(int(rng.integers(lo, hi + 1)), make_child())
    n = int(rng.integers(2, max(prims.max_children, 2) + 1))
    kids = tuple(make_child() for _ in range(n))
    return {"sel": bt.Selector, "seq": bt.Sequence, "psel": bt.ParallelSelector, "pseq": bt.ParallelSequence}[tag](kids)


def _build(rng, prims, level, target, method):
    if level >= target:
        return random_terminal(rng, prims)
    n_comp = len(prims.composites)
    if method == "grow" and rng.random() < 2 / (n_comp + 2):
        return random_terminal(rng, prims)
    tag = prims.composites[int(rng.integers(n_comp))]
    return _random_composite(rng, prims, tag, lambda: _build(rng, prims, level + 1, target, method))


def random_tree(
    rng: np.random.Generator,
    prims: PrimitiveSet,
    depth_range: tuple[int, int] = (2, 4),
    method: str = "grow",
    max_nodes: int = bt.DEFAULT_MAX_NODES,
) -> bt.Node:
    """Draw a random tree with depth in ``depth_range``.

    ``full`` trees place leaves only at the drawn depth; ``grow`` trees may
    stop any branch early. Draws over ``max_nodes`` are discarded and redrawn.
    """
    lo, hi = depth_range
    if not 1 <= lo <= hi:
        raise InvalidArgumentError(f"invalid depth range {depth_range!r}")
    if method not in ("full", "grow"):
        raise InvalidArgumentError(f"unknown method {method!r}")
    if not prims.composites and hi > 1:
        hi = lo = 1
    for _ in range(100):
        target = int(rng.integers(lo, hi + 1))
        tree = _build(rng, prims, 1, target, method)
        if bt.size(tree) <= max_nodes:
            return tree
        method = "grow"
    return random_terminal(rng, prims)


def ramped_half_and_half(
    n: int,
    rng: np.random.Generator,
    prims: PrimitiveSet,
    depth_range: tuple[int, int],
    max_nodes: int = bt.DEFAULT_MAX_NODES,
) -> list[bt.Node]:
    """``n`` trees alternating full/grow, cycling through depths in ``depth_range``."""
    lo, hi = depth_range
    depths = list(range(lo, hi + 1))
    trees = []
    for i in range(n):
        d = depths[(i // 2) % len(depths)]
        method = "full" if i % 2 == 0 else "grow"
        trees.append(random_tree(rng, prims, (d, d), method, max_nodes))
    return trees


def tournament_select(population: Sequence, k: int, rng: np.random.Generator):
    """Pick ``k`` distinct members uniformly and return the fittest.

    Members need ``fitness`` and ``id`` attributes; ties go to the lowest id.
    """
    if k < 1 or len(population) < k:
        raise InvalidArgumentError(f"tournament of size {k} needs at least {k} agents, got {len(population)}")
    picks = rng.choice(len(population), size=k, replace=False)
    contenders = [population[int(i)] for i in picks]
    if any(a.fitness is None for a in contenders):
        raise InvalidArgumentError("tournament over agents without fitness")
    return max(contenders, key=lambda a: (a.fitness, -a.id))


def _fits(tree, max_depth, max_nodes):
    return bt.depth(tree) <= max_depth and bt.size(tree) <= max_nodes


def subtree_crossover(
    a: bt.Node,
    b: bt.Node,
    rng: np.random.Generator,
    rate: float = 0.5,
    max_depth: int = bt.DEFAULT_MAX_DEPTH,
    max_nodes: int = bt.DEFAULT_MAX_NODES,
) -> tuple[bt.Node, bt.Node]:
    if rng.random() >= rate:
        return a, b
    nodes_a = list(bt.iter_nodes(a))
    nodes_b = list(bt.iter_nodes(b))
    for _ in range(REPAIR_ATTEMPTS):
        pa, sa, _ = nodes_a[int(rng.integers(len(nodes_a)))]
        pb, sb, _ = nodes_b[int(rng.integers(len(nodes_b)))]
        ca = bt.replace_at(a, pa, sb)
        cb = bt.replace_at(b, pb, sa)
        if _fits(ca, max_depth, max_nodes) and _fits(cb, max_depth, max_nodes):
            return ca, cb
    return a, b


def subtree_mutation(
    tree: bt.Node,
    rng: np.random.Generator,
    prims: PrimitiveSet,
    rate: float = 0.15,
    max_depth: int = bt.DEFAULT_MAX_DEPTH,
    max_nodes: int = bt.DEFAULT_MAX_NODES,
) -> bt.Node:
    if rng.random() >= rate:
        return tree
    nodes = list(bt.iter_nodes(tree))
    for _ in range(REPAIR_ATTEMPTS):
        path, _, level = nodes[int(rng.integers(len(nodes)))]
        budget = max_depth - level + 1
        fresh = random_tree(rng, prims, (1, budget), "grow", max_nodes)
        out = bt.replace_at(tree, path, fresh)
        if _fits(out, max_depth, max_nodes):
            return out
    return tree


def mutate_inherited(
    learned: LearnedBehavior,
    rng: np.random.Generator,
    rate: float = 0.2,
    element_prob: float = 0.1,
    sigma: float = 0.1,
) -> LearnedBehavior:
    """With probability ``rate``, add N(0, sigma) noise to each element independently w.p. ``element_prob``."""
    if rng.random() >= rate:
        return learned
    values = learned.mutable_values()
    hit = rng.random(values.size) < element_prob
    values[hit] += rng.normal(0.0, sigma, size=int(hit.sum()))
    return learned.with_mutable_values(values)
