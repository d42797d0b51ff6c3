"""Behavior trees used as evolvable instinctive policies.

Trees are immutable. A tick walks the tree depth-first; the first
:class:`Action` reached fixes the agent's action for the step and the rest
of the traversal is abandoned, every ancestor reporting ``SUCCESS``. A tick
that reaches no action leaves the decision to the learner.

Textual form (round-trips exactly)::

    (sel (seq (cond 3 >= 0.1) (act 1)) (act 0))

Tokens: ``sel`` ``seq`` ``inv`` ``rep N`` ``ruf`` ``psel`` ``pseq``
``cond FEATURE OP THRESHOLD`` ``act ID``.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import InvalidArgumentError

REPEAT_CAP = 16
DEFAULT_MAX_DEPTH = 6
DEFAULT_MAX_NODES = 64


class Signal(enum.Enum):
    SUCCESS = 0
    FAILURE = 1
    RUNNING = 2


SUCCESS, FAILURE, RUNNING = Signal.SUCCESS, Signal.FAILURE, Signal.RUNNING

# int8 codes used by the batched interpreter
_S, _F, _R = 0, 1, 2


class Node:
    """Base class for tree nodes."""

    __slots__ = ()
    children: tuple = ()
    tag: str = ""

    def with_children(self, children: Iterable["Node"]) -> "Node":
        return self


@dataclass(frozen=True)
class Condition(Node):
    feature: int
    op: str
    threshold: float
    tag = "cond"

    def __post_init__(self):
        if self.op not in ("<", ">="):
            raise InvalidArgumentError(f"condition comparator must be '<' or '>=', got {self.op!r}")
        if self.feature < 0:
            raise InvalidArgumentError("feature index must be non-negative")
        if not math.isfinite(self.threshold):
            raise InvalidArgumentError("condition threshold must be finite")

    def test(self, obs) -> bool:
        if self.op == "<":
            return obs[self.feature] < self.threshold
        return obs[self.feature] >= self.threshold


@dataclass(frozen=True)
class Action(Node):
    action: int
    tag = "act"

    def __post_init__(self):
        if self.action < 0:
            raise InvalidArgumentError("action id must be non-negative")


@dataclass(frozen=True)
class _Composite(Node):
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) < 1:
            raise InvalidArgumentError(f"{type(self).__name__} needs at least one child")
        for c in self.children:
            if not isinstance(c, Node):
                raise InvalidArgumentError(f"child {c!r} is not a tree node")

    def with_children(self, children):
        return type(self)(tuple(children))


class Selector(_Composite):
    tag = "sel"


class Sequence(_Composite):
    tag = "seq"


class ParallelSelector(_Composite):
    tag = "psel"


class ParallelSequence(_Composite):
    tag = "pseq"


@dataclass(frozen=True)
class _Decorator(Node):
    child: Node

    def __post_init__(self):
        if not isinstance(self.child, Node):
            raise InvalidArgumentError(f"child {self.child!r} is not a tree node")

    @property
    def children(self):
        return (self.child,)

    def with_children(self, children):
        (child,) = children
        return type(self)(child)


class Invert(_Decorator):
    tag = "inv"


class RepeatUntilFail(_Decorator):
    tag = "ruf"


@dataclass(frozen=True)
class Repeat(Node):
    count: int
    child: Node
    tag = "rep"

    def __post_init__(self):
        if self.count < 1:
            raise InvalidArgumentError("repeat count must be >= 1")
        if not isinstance(self.child, Node):
            raise InvalidArgumentError(f"child {self.child!r} is not a tree node")

    @property
    def children(self):
        return (self.child,)

    def with_children(self, children):
        (child,) = children
        return Repeat(self.count, child)


@dataclass(frozen=True)
class TickResult:
    signal: Signal
    chosen_action: Optional[int]
    nodes_visited: int


# ---------------------------------------------------------------------------
# structure helpers


def depth(tree: Node) -> int:
    """Number of nodes on the longest root-to-leaf path (a leaf has depth 1)."""
    if not tree.children:
        return 1
    return 1 + max(depth(c) for c in tree.children)


def size(tree: Node) -> int:
    return 1 + sum(size(c) for c in tree.children)


def iter_nodes(tree: Node, path: tuple = (), level: int = 1) -> Iterator[tuple[tuple, Node, int]]:
    """Pre-order ``(path, node, depth)`` triples; a path lists child positions from the root."""
    yield path, tree, level
    for i, c in enumerate(tree.children):
        yield from iter_nodes(c, path + (i,), level + 1)


def subtree_at(tree: Node, path: tuple) -> Node:
    for i in path:
        tree = tree.children[i]
    return tree


def replace_at(tree: Node, path: tuple, new: Node) -> Node:
    if not path:
        return new
    i, rest = path[0], path[1:]
    kids = list(tree.children)
    kids[i] = replace_at(kids[i], rest, new)
    return tree.with_children(kids)


def validate(
    tree: Node,
    state_dim: int | None = None,
    action_count: int | None = None,
    max_depth: int = DEFAULT_MAX_DEPTH,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> None:
    """Raise :class:`InvalidArgumentError` unless ``tree`` satisfies every structural limit."""
    if not isinstance(tree, Node):
        raise InvalidArgumentError(f"{tree!r} is not a tree node")
    if depth(tree) > max_depth:
        raise InvalidArgumentError(f"tree depth {depth(tree)} exceeds {max_depth}")
    if size(tree) > max_nodes:
        raise InvalidArgumentError(f"tree has {size(tree)} nodes, limit is {max_nodes}")
    for _, node, _ in iter_nodes(tree):
        if isinstance(node, Condition) and state_dim is not None and node.feature >= state_dim:
            raise InvalidArgumentError(f"condition feature {node.feature} out of range")
        if isinstance(node, Action) and action_count is not None and node.action >= action_count:
            raise InvalidArgumentError(f"action id {node.action} out of range")


def is_valid(tree: Node, **limits) -> bool:
    try:
        validate(tree, **limits)
    except InvalidArgumentError:
        return False
    return True


# ---------------------------------------------------------------------------
# scalar interpreter


class _Ctx:
    __slots__ = ("action", "visited")

    def __init__(self):
        self.action = None
        self.visited = 0


def _tick(node: Node, obs, ctx: _Ctx) -> Signal:
    ctx.visited += 1
    cls = type(node)
    if cls is Condition:
        return SUCCESS if node.test(obs) else FAILURE
    if cls is Action:
        ctx.action = node.action
        return SUCCESS
    if cls is Selector:
        for child in node.children:
            s = _tick(child, obs, ctx)
            if ctx.action is not None:
                return SUCCESS
            if s is not FAILURE:
                return s
        return FAILURE
    if cls is Sequence:
        for child in node.children:
            s = _tick(child, obs, ctx)
            if ctx.action is not None:
                return SUCCESS
            if s is not SUCCESS:
                return s
        return SUCCESS
    if cls is Invert:
        s = _tick(node.child, obs, ctx)
        if ctx.action is not None:
            return SUCCESS
        if s is SUCCESS:
            return FAILURE
        if s is FAILURE:
            return SUCCESS
        return s
    if cls is Repeat:
        s = FAILURE
        for _ in range(min(node.count, REPEAT_CAP)):
            s = _tick(node.child, obs, ctx)
            if ctx.action is not None:
                return SUCCESS
        return s
    if cls is RepeatUntilFail:
        s = FAILURE
        for _ in range(REPEAT_CAP):
            s = _tick(node.child, obs, ctx)
            if ctx.action is not None:
                return SUCCESS
            if s is FAILURE:
                return SUCCESS
        return s
    if cls is ParallelSelector or cls is ParallelSequence:
        signals = []
        for child in node.children:
            signals.append(_tick(child, obs, ctx))
            if ctx.action is not None:
                return SUCCESS
        if cls is ParallelSelector:
            return SUCCESS if SUCCESS in signals else FAILURE
        return SUCCESS if all(s is SUCCESS for s in signals) else FAILURE
    raise InvalidArgumentError(f"unknown node type {cls.__name__}")


def tick(tree: Node, obs) -> TickResult:
    """Tick ``tree`` once on ``obs``.

    Returns:
        The root signal, the action chosen by the first action node reached
        (``None`` when no action node was reached) and the number of node
        ticks performed.
    """
    if not isinstance(tree, Node):
        raise InvalidArgumentError(f"{tree!r} is not a tree node")
    ctx = _Ctx()
    signal = _tick(tree, obs, ctx)
    return TickResult(signal, ctx.action, ctx.visited)


def decide(tree: Node | None, obs) -> Optional[int]:
    """Shortcut for ``tick(tree, obs).chosen_action``; ``None`` tree never decides."""
    if tree is None:
        return None
    ctx = _Ctx()
    _tick(tree, obs, ctx)
    return ctx.action


# ---------------------------------------------------------------------------
# batched interpreter


def decide_batch(tree: Node | None, obs: np.ndarray) -> np.ndarray:
    """Chosen action per row of ``obs`` (``-1`` where the tree does not decide)."""
    n = obs.shape[0]
    action = np.full(n, -1, dtype=np.int64)
    if tree is not None and n:
        _tick_batch(tree, obs, np.ones(n, dtype=bool), action)
    return action


def _tick_batch(node: Node, obs: np.ndarray, live: np.ndarray, action: np.ndarray) -> np.ndarray:
    # ``live`` selects rows ticked by this call; rows already holding an action never are.
    cls = type(node)
    n = obs.shape[0]
    if cls is Condition:
        col = obs[:, node.feature]
        # SUCCESS is 0 and FAILURE 1, so the failed-test mask is the signal
        failed = col >= node.threshold if node.op == "<" else col < node.threshold
        return failed.view(np.int8)
    if cls is Action:
        action[live] = node.action
        return np.full(n, _S, dtype=np.int8)

    out = np.full(n, _F, dtype=np.int8)
    if cls is Selector or cls is Sequence:
        out[:] = _S if cls is Sequence else _F
        pending = live.copy()
        for child in node.children:
            if not pending.any():
                break
            s = _tick_batch(child, obs, pending, action)
            if cls is Selector:
                stop = pending & (s != _F)
            else:
                stop = pending & (s != _S)
            out[stop] = s[stop]
            pending &= ~stop & (action < 0)
    elif cls is Invert:
        s = _tick_batch(node.child, obs, live, action)
        out = np.where(s == _S, _F, np.where(s == _F, _S, s)).astype(np.int8)
    elif cls is Repeat:
        pending = live.copy()
        for _ in range(min(node.count, REPEAT_CAP)):
            if not pending.any():
                break
            s = _tick_batch(node.child, obs, pending, action)
            out[pending] = s[pending]
            pending &= action < 0
    elif cls is RepeatUntilFail:
        pending = live.copy()
        for _ in range(REPEAT_CAP):
            if not pending.any():
                break
            s = _tick_batch(node.child, obs, pending, action)
            out[pending] = s[pending]
            failed = pending & (s == _F)
            out[failed] = _S
            pending &= ~failed & (action < 0)
    elif cls is ParallelSelector or cls is ParallelSequence:
        pending = live.copy()
        any_s = np.zeros(n, dtype=bool)
        all_s = np.ones(n, dtype=bool)
        for child in node.children:
            if not pending.any():
                break
            s = _tick_batch(child, obs, pending, action)
            any_s |= pending & (s == _S)
            all_s &= ~pending | (s == _S)
            pending &= action < 0
        ok = any_s if cls is ParallelSelector else all_s
        out = np.where(ok, _S, _F).astype(np.int8)
    else:
        raise InvalidArgumentError(f"unknown node type {cls.__name__}")
    out[live & (action >= 0)] = _S
    return out


# ---------------------------------------------------------------------------
# text form


def to_sexpr(tree: Node) -> str:
    cls = type(tree)
    if cls is Condition:
        return f"(cond {tree.feature} {tree.op} {float(tree.threshold)!r})"
    if cls is Action:
        return f"(act {tree.action})"
    if cls is Repeat:
        return f"(rep {tree.count} {to_sexpr(tree.child)})"
    return "(" + tree.tag + "".join(" " + to_sexpr(c) for c in tree.children) + ")"


_TOKEN = re.compile(r"\(|\)|[^\s()]+")
_COMPOSITES = {
    "sel": Selector,
    "seq": Sequence,
    "psel": ParallelSelector,
    "pseq": ParallelSequence,
}
_DECORATORS = {"inv": Invert, "ruf": RepeatUntilFail}


def parse_sexpr(text: str) -> Node:
    """Parse the textual form produced by :func:`to_sexpr`."""
    tokens = _TOKEN.findall(text)
    pos = 0

    def expect(tok):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != tok:
            got = tokens[pos] if pos < len(tokens) else "end of input"
            raise InvalidArgumentError(f"expected {tok!r}, got {got!r}")
        pos += 1

    def atom():
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] in "()":
            raise InvalidArgumentError("unexpected token in tree text")
        pos += 1
        return tokens[pos - 1]

    def node():
        nonlocal pos
        expect("(")
        head = atom()
        try:
            if head == "cond":
                result = Condition(int(atom()), atom(), float(atom()))
            elif head == "act":
                result = Action(int(atom()))
            elif head == "rep":
                count = int(atom())
                result = Repeat(count, node())
            elif head in _DECORATORS:
                result = _DECORATORS[head](node())
            elif head in _COMPOSITES:
                kids = []
                while pos < len(tokens) and tokens[pos] == "(":
                    kids.append(node())
                result = _COMPOSITES[head](tuple(kids))
            else:
                raise InvalidArgumentError(f"unknown node tag {head!r}")
        except ValueError as exc:
            if isinstance(exc, InvalidArgumentError):
                raise
            raise InvalidArgumentError(str(exc)) from None
        expect(")")
        return result

    tree = node()
    if pos != len(tokens):
        raise InvalidArgumentError("trailing tokens after tree")
    return tree
