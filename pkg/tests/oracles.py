"""Independent reference implementations used as test oracles.

Nothing here imports the package's interpreter or statistics code.
"""

import itertools
import math

LEAVES = (("cond",), ("act", 0), ("act", 1))


def enumerate_trees(max_depth, max_children=2):
    """All tuple-encoded trees over sel/seq/inv, ``x0 < 0`` and two actions."""
    if max_depth == 1:
        return list(LEAVES)
    smaller = enumerate_trees(max_depth - 1, max_children)
    out = list(LEAVES)
    out += [("inv", t) for t in smaller]
    for kind in ("sel", "seq"):
        for n in range(1, max_children + 1):
            out += [(kind,) + kids for kids in itertools.product(smaller, repeat=n)]
    return out


def reference_tick(tree, x0):
    """Return ``(status, action)``; the first action reached ends the whole tick with success."""
    kind = tree[0]
    if kind == "cond":
        return ("success" if x0 < 0 else "failure"), None
    if kind == "act":
        return "success", tree[1]
    if kind == "inv":
        status, action = reference_tick(tree[1], x0)
        if action is not None:
            return "success", action
        return ("failure" if status == "success" else "success"), None
    if kind == "sel":
        for child in tree[1:]:
            status, action = reference_tick(child, x0)
            if action is not None:
                return "success", action
            if status == "success":
                return "success", None
        return "failure", None
    if kind == "seq":
        for child in tree[1:]:
            status, action = reference_tick(child, x0)
            if action is not None:
                return "success", action
            if status == "failure":
                return "failure", None
        return "success", None
    raise ValueError(kind)


def to_library_tree(tree):
    from evorl import behavior_tree as bt

    kind = tree[0]
    if kind == "cond":
        return bt.Condition(0, "<", 0.0)
    if kind == "act":
        return bt.Action(tree[1])
    if kind == "inv":
        return bt.Invert(to_library_tree(tree[1]))
    kids = tuple(to_library_tree(c) for c in tree[1:])
    return bt.Selector(kids) if kind == "sel" else bt.Sequence(kids)


def spreadsheet_sem(values, population=False):
    """SEM the long way: explicit sums, no numpy."""
    n = len(values)
    if n == 1:
        return 0.0
    mean = math.fsum(values) / n
    ss = math.fsum((v - mean) ** 2 for v in values)
    var = ss / (n if population else n - 1)
    return math.sqrt(var) / math.sqrt(n)
