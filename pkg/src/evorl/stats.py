"""Trial statistics."""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from .errors import InvalidArgumentError


def sem(values: Iterable[float], population: bool = False) -> float:
    """Standard error of the mean, ``std / sqrt(N)``.

    The sample (N-1) standard deviation is used unless ``population`` is set.
    A single value has no spread and gives 0.
    """
    x = np.asarray(list(values), dtype=float)
    if x.size == 0:
        raise InvalidArgumentError("sem of an empty sequence")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("sem needs finite values")
    if x.size == 1:
        return 0.0
    sd = float(np.std(x, ddof=0 if population else 1))
    return sd / math.sqrt(x.size)


def median_solved_at(solved_at: list) -> float | None:
    """Median of per-trial solve points, treating unsolved trials as infinite.

    Returns None when the median trial did not solve.
    """
    if not solved_at:
        return None
    keyed = sorted(math.inf if s is None else float(s) for s in solved_at)
    n = len(keyed)
    mid = keyed[n // 2] if n % 2 else 0.5 * (keyed[n // 2 - 1] + keyed[n // 2])
    return None if math.isinf(mid) else mid
