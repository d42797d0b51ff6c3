from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from evorl import behavior_tree as bt
from evorl.classic_control import get_spec
from evorl.errors import InvalidArgumentError
from evorl.gp import (
    GPConfig,
    PrimitiveSet,
    mutate_inherited,
    ramped_half_and_half,
    random_tree,
    subtree_crossover,
    subtree_mutation,
    tournament_select,
)
from evorl.learners import MLPParams, QTable

PRIMS = PrimitiveSet.for_spec(get_spec("cartpole"))
EXT = PrimitiveSet.for_spec(get_spec("acrobot"), extended=True)


@dataclass
class Member:
    id: int
    fitness: float


def _valid(tree, prims, max_depth=6, max_nodes=64):
    return bt.is_valid(
        tree, state_dim=prims.state_dim, action_count=prims.action_count, max_depth=max_depth, max_nodes=max_nodes
    )


class TestRandomTree:
    def test_depth_one_is_leaf(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            t = random_tree(rng, PRIMS, (1, 1))
            assert isinstance(t, (bt.Condition, bt.Action))

    @pytest.mark.parametrize("prims", [PRIMS, EXT], ids=["basic", "extended"])
    def test_thousand_trees_valid(self, prims):
        rng = np.random.default_rng(1)
        for i in range(1000):
            t = random_tree(rng, prims, (1, 6), "full" if i % 2 else "grow")
            assert _valid(t, prims)

    def test_full_trees_reach_target_depth(self):
        rng = np.random.default_rng(2)
        for d in (2, 3, 4):
            assert bt.depth(random_tree(rng, PRIMS, (d, d), "full", max_nodes=10_000)) == d

    def test_thresholds_within_bounds(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            for _, node, _ in bt.iter_nodes(random_tree(rng, PRIMS, (2, 4))):
                if isinstance(node, bt.Condition):
                    assert PRIMS.lower[node.feature] <= node.threshold <= PRIMS.upper[node.feature]

    def test_determinism(self):
        a = random_tree(np.random.default_rng(9), PRIMS, (2, 4))
        b = random_tree(np.random.default_rng(9), PRIMS, (2, 4))
        assert bt.to_sexpr(a) == bt.to_sexpr(b)

    def test_ramped_population(self):
        trees = ramped_half_and_half(30, np.random.default_rng(4), PRIMS, (2, 4))
        assert len(trees) == 30
        assert all(_valid(t, PRIMS) for t in trees)
        # even slots are full trees of the cycled depth
        assert [bt.depth(t) for t in trees[0:6:2]] == [2, 3, 4]

    def test_empty_primitive_set(self):
        with pytest.raises(InvalidArgumentError):
            PrimitiveSet(0, 2, (), ())

    def test_bad_depth_range(self):
        with pytest.raises(InvalidArgumentError):
            random_tree(np.random.default_rng(0), PRIMS, (3, 2))


class TestTournament:
    def test_full_tournament_picks_best(self):
        pop = [Member(0, 10.0), Member(1, 20.0), Member(2, 30.0)]
        rng = np.random.default_rng(0)
        assert all(tournament_select(pop, 3, rng).fitness == 30.0 for _ in range(100))

    def test_k1_is_uniform(self):
        pop = [Member(i, float(i)) for i in range(10)]
        rng = np.random.default_rng(123)
        counts = np.bincount([tournament_select(pop, 1, rng).id for _ in range(10_000)], minlength=10)
        assert chisquare(counts).pvalue > 0.01

    def test_tie_goes_to_lowest_id(self):
        pop = [Member(i, 5.0) for i in (7, 3, 9, 4)]
        rng = np.random.default_rng(1)
        assert all(tournament_select(pop, 4, rng).id == 3 for _ in range(20))
        for _ in range(200):
            pick = tournament_select(pop, 2, rng)
            assert pick.id != 9  # 9 can never beat a lower id

    def test_selection_pressure(self):
        rng = np.random.default_rng(2)
        pop = [Member(i, float(f)) for i, f in enumerate(rng.normal(50, 20, size=30))]
        mean = np.mean([m.fitness for m in pop])
        picked = np.mean([tournament_select(pop, 3, rng).fitness for _ in range(10_000)])
        assert picked >= mean

    def test_too_small_population(self):
        with pytest.raises(InvalidArgumentError):
            tournament_select([Member(0, 1.0)], 3, np.random.default_rng(0))


class TestCrossover:
    def test_rate_zero_copies(self):
        rng = np.random.default_rng(0)
        a, b = (random_tree(rng, PRIMS, (2, 4)) for _ in range(2))
        ca, cb = subtree_crossover(a, b, rng, rate=0.0)
        assert ca == a and cb == b

    def test_single_leaves_swap_or_copy(self):
        a, b = bt.Action(0), bt.Condition(1, "<", 0.2)
        rng = np.random.default_rng(1)
        for _ in range(20):
            assert subtree_crossover(a, b, rng, rate=1.0) in [(a, b), (b, a)]

    def test_thousand_crossovers_valid(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            a, b = (random_tree(rng, PRIMS, (1, 6)) for _ in range(2))
            for child in subtree_crossover(a, b, rng, rate=1.0):
                assert _valid(child, PRIMS)

    def test_parents_untouched(self):
        rng = np.random.default_rng(3)
        a, b = (random_tree(rng, PRIMS, (3, 4)) for _ in range(2))
        sa, sb = bt.to_sexpr(a), bt.to_sexpr(b)
        subtree_crossover(a, b, rng, rate=1.0)
        assert (bt.to_sexpr(a), bt.to_sexpr(b)) == (sa, sb)


class TestMutation:
    def test_rate_zero_identity(self):
        rng = np.random.default_rng(0)
        t = random_tree(rng, PRIMS, (2, 4))
        assert subtree_mutation(t, rng, PRIMS, rate=0.0) is t

    def test_forced_on_leaf(self):
        rng = np.random.default_rng(1)
        changed = 0
        for _ in range(100):
            out = subtree_mutation(bt.Action(0), rng, PRIMS, rate=1.0, max_depth=3)
            assert _valid(out, PRIMS, max_depth=3)
            changed += out != bt.Action(0)
        assert changed > 50

    @pytest.mark.parametrize("prims", [PRIMS, EXT], ids=["basic", "extended"])
    def test_thousand_mutations_valid(self, prims):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            t = random_tree(rng, prims, (1, 6))
            assert _valid(subtree_mutation(t, rng, prims, rate=1.0), prims)


def _filled_table(n=1000, seed=0):
    rng = np.random.default_rng(seed)
    return QTable(500, 2, rng.normal(size=(500, 2)), np.ones((500, 2), bool))


class TestMutateInherited:
    def test_outer_draw_fails_identity(self):
        table = _filled_table()
        assert mutate_inherited(table, np.random.default_rng(0), rate=0.0) is table

    def test_about_ten_percent_change(self):
        table = _filled_table()
        out = mutate_inherited(table, np.random.default_rng(5), rate=1.0, element_prob=0.1, sigma=0.1)
        changed = int((out.values != table.values).sum())
        assert 60 <= changed <= 140

    def test_zero_sigma_identity(self):
        table = QTable(500, 2, np.zeros((500, 2)), np.ones((500, 2), bool))
        out = mutate_inherited(table, np.random.default_rng(0), rate=1.0, sigma=0.0)
        assert out == table

    def test_input_not_modified(self):
        table = _filled_table()
        before = table.to_bytes()
        mutate_inherited(table, np.random.default_rng(1), rate=1.0, element_prob=0.5)
        assert table.to_bytes() == before

    def test_unvisited_entries_stay_default(self):
        table = QTable.from_entries(10, 2, {(3, 1): 1.0})
        out = mutate_inherited(table, np.random.default_rng(0), rate=1.0, element_prob=1.0)
        assert set(out.entries()) == {(3, 1)}

    def test_network(self):
        params = MLPParams.initialize((4, 8, 2), np.random.default_rng(0))
        out = mutate_inherited(params, np.random.default_rng(1), rate=1.0, element_prob=0.1)
        diff = out.flat != params.flat
        assert 0 < diff.sum() < params.flat.size

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_outer_rate_frequency_bounds(self, seed):
        table = QTable.from_entries(4, 2, {(0, 0): 1.0})
        out = mutate_inherited(table, np.random.default_rng(seed), rate=0.2, element_prob=1.0)
        assert set(out.entries()) == {(0, 0)}


class TestConfig:
    def test_defaults_valid(self):
        GPConfig().validate()

    @pytest.mark.parametrize(
        "kwargs",
        [{"crossover_rate": 1.5}, {"tournament_k": 31}, {"init_depth_range": (2, 7)}, {"elitism": -1}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidArgumentError):
            GPConfig(**kwargs).validate()
