import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evorl import behavior_tree as bt
from evorl.behavior_tree import (
    FAILURE,
    RUNNING,
    SUCCESS,
    Action,
    Condition,
    Invert,
    ParallelSelector,
    ParallelSequence,
    Repeat,
    RepeatUntilFail,
    Selector,
    Sequence,
)
from evorl.errors import InvalidArgumentError
from evorl.gp import PrimitiveSet, random_tree
from oracles import enumerate_trees, reference_tick, to_library_tree

NEG = Condition(0, "<", 0.0)


class TestTick:
    def test_single_action(self):
        for obs in [(-1.0,), (3.0,)]:
            r = bt.tick(Action(1), obs)
            assert r.signal is SUCCESS and r.chosen_action == 1

    def test_selector_short_circuits_on_condition(self):
        r = bt.tick(Selector((NEG, Action(0))), (-1.0,))
        assert r.signal is SUCCESS
        assert r.chosen_action is None

    def test_selector_falls_through_to_action(self):
        r = bt.tick(Selector((NEG, Action(0))), (1.0,))
        assert r.chosen_action == 0

    def test_sequence_guards_action(self):
        tree = Sequence((NEG, Action(1)))
        assert bt.decide(tree, (-1.0,)) == 1
        r = bt.tick(tree, (1.0,))
        assert r.signal is FAILURE and r.chosen_action is None

    def test_first_action_aborts_traversal(self):
        # the second action must never be reached, and nothing after it ticked
        tree = Sequence((Action(0), Action(1), NEG))
        r = bt.tick(tree, (5.0,))
        assert r.chosen_action == 0
        assert r.nodes_visited == 2

    def test_invert_around_action_still_succeeds(self):
        r = bt.tick(Invert(Action(1)), (0.0,))
        assert r.signal is SUCCESS and r.chosen_action == 1

    def test_invert_negates_condition(self):
        assert bt.tick(Invert(NEG), (-1.0,)).signal is FAILURE
        assert bt.tick(Invert(NEG), (1.0,)).signal is SUCCESS

    def test_condition_ops(self):
        c = Condition(1, ">=", 0.5)
        assert c.test((0.0, 0.5)) and not c.test((0.0, 0.49))

    def test_repeat_returns_last_signal(self):
        r = bt.tick(Repeat(3, NEG), (1.0,))
        assert r.signal is FAILURE
        assert r.nodes_visited == 4

    def test_repeat_until_fail_is_bounded(self):
        r = bt.tick(RepeatUntilFail(NEG), (-1.0,))
        assert r.nodes_visited == 1 + bt.REPEAT_CAP
        assert r.signal is SUCCESS
        assert bt.tick(RepeatUntilFail(NEG), (1.0,)).signal is SUCCESS

    def test_parallel_aggregation(self):
        pos = Condition(0, ">=", 0.0)
        assert bt.tick(ParallelSelector((NEG, pos)), (1.0,)).signal is SUCCESS
        assert bt.tick(ParallelSequence((NEG, pos)), (1.0,)).signal is FAILURE
        r = bt.tick(ParallelSequence((pos, pos)), (1.0,))
        assert r.signal is SUCCESS and r.nodes_visited == 3

    def test_empty_tree_never_decides(self):
        assert bt.decide(None, (1.0,)) is None

    def test_rejects_non_node(self):
        with pytest.raises(InvalidArgumentError):
            bt.tick("sel", (0.0,))
        with pytest.raises(InvalidArgumentError):
            Selector(())
        with pytest.raises(InvalidArgumentError):
            Condition(0, "<=", 0.0)

    def test_running_is_a_signal(self):
        assert {SUCCESS, FAILURE, RUNNING} == set(bt.Signal)


class TestReferenceAgreement:
    def test_exhaustive_depth_three(self):
        trees = enumerate_trees(3)
        assert len(trees) == 1893
        for t in trees:
            lib = to_library_tree(t)
            for x0 in (-1.0, 1.0):
                status, action = reference_tick(t, x0)
                r = bt.tick(lib, (x0,))
                assert r.signal.name.lower() == status
                assert r.chosen_action == action

    def test_batch_matches_scalar_exhaustive(self):
        obs = np.array([[-1.0], [1.0]])
        for t in enumerate_trees(3):
            lib = to_library_tree(t)
            got = bt.decide_batch(lib, obs)
            want = [bt.decide(lib, (x,)) for x in (-1.0, 1.0)]
            assert [None if a < 0 else int(a) for a in got] == want


class TestStructure:
    tree = Selector((Sequence((Condition(2, ">=", 0.1), Action(1))), Invert(Action(0))))

    def test_depth_and_size(self):
        assert bt.depth(Action(0)) == 1
        assert bt.depth(self.tree) == 3
        assert bt.size(self.tree) == 6

    def test_paths(self):
        paths = [p for p, _, _ in bt.iter_nodes(self.tree)]
        assert paths[0] == ()
        assert bt.subtree_at(self.tree, (1, 0)) == Action(0)

    def test_replace_at_is_pure(self):
        before = bt.to_sexpr(self.tree)
        new = bt.replace_at(self.tree, (0, 1), Action(0))
        assert bt.to_sexpr(self.tree) == before
        assert bt.subtree_at(new, (0, 1)) == Action(0)

    def test_validate_limits(self):
        bt.validate(self.tree, state_dim=4, action_count=2)
        with pytest.raises(InvalidArgumentError):
            bt.validate(self.tree, state_dim=2, action_count=2)
        with pytest.raises(InvalidArgumentError):
            bt.validate(self.tree, state_dim=4, action_count=1)
        with pytest.raises(InvalidArgumentError):
            bt.validate(self.tree, state_dim=4, action_count=2, max_depth=2)
        assert not bt.is_valid(self.tree, state_dim=4, action_count=2, max_nodes=5)


def _extended_prims():
    return PrimitiveSet(
        4, 2, (-1.0,) * 4, (1.0,) * 4,
        composites=("sel", "seq", "inv", "rep", "ruf", "psel", "pseq"),
    )


class TestRandomTrees:
    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=150, deadline=None)
    def test_sexpr_round_trip(self, seed):
        tree = random_tree(np.random.default_rng(seed), _extended_prims(), (1, 5))
        text = bt.to_sexpr(tree)
        assert bt.parse_sexpr(text) == tree
        assert bt.to_sexpr(bt.parse_sexpr(text)) == text

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=100, deadline=None)
    def test_batch_matches_scalar(self, seed):
        rng = np.random.default_rng(seed)
        tree = random_tree(rng, _extended_prims(), (1, 5))
        obs = rng.uniform(-1.2, 1.2, size=(32, 4))
        got = bt.decide_batch(tree, obs)
        for row, a in zip(obs, got):
            want = bt.decide(tree, tuple(row))
            assert (None if a < 0 else int(a)) == want

    def test_parse_errors(self):
        for text in ["(sel", "(cond 0 < x)", "(foo (act 1))", "(act 1) (act 0)", ""]:
            with pytest.raises(InvalidArgumentError):
                bt.parse_sexpr(text)
