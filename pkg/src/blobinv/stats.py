"""Two-sided Wilcoxon rank-sum test for comparing run populations.

The statistic is the rank sum of the first sample over the pooled,
midrank-tied data.  For small pools (combined size <= 20 by default)
the p-value is exact: every assignment of pooled ranks to the first
sample is enumerated and the two-sided p doubles the smaller tail
(capped at 1).  Larger pools use the normal approximation with the
usual tie correction and a 0.5 continuity correction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

EXACT_LIMIT = 20


@dataclass(frozen=True)
class RankSumResult:
    statistic: float      # rank sum of sample a (midranks)
    p_value: float
    method: str           # "exact" | "normal"


def _doubled_midranks(pooled: list[float]) -> list[int]:
    """Midranks of the pooled values, times two so ties stay integral."""
    order = sorted(range(len(pooled)), key=pooled.__getitem__)
    doubled = [0] * len(pooled)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and pooled[order[j + 1]] == pooled[order[i]]:
            j += 1
        # ranks i+1 .. j+1 share the midrank (i+j+2)/2; doubled: i+j+2
        for k in range(i, j + 1):
            doubled[order[k]] = i + j + 2
        i = j + 1
    return doubled


def rank_sum_statistic(a, b) -> float:
    """Midrank sum of sample a within the pooled data."""
    doubled = _doubled_midranks(list(a) + list(b))
    return sum(doubled[: len(a)]) / 2.0


def _exact_p(doubled: list[int], n1: int, observed_doubled: int) -> float:
    at_most = 0
    at_least = 0
    total = 0
    for combo in itertools.combinations(doubled, n1):
        w = sum(combo)
        total += 1
        if w <= observed_doubled:
            at_most += 1
        if w >= observed_doubled:
            at_least += 1
    return min(1.0, 2.0 * min(at_most, at_least) / total)


def _normal_p(doubled: list[int], n1: int, observed_doubled: int) -> float:
    n = len(doubled)
    n2 = n - n1
    mean = n1 * (n + 1) / 2.0
    tie_term = 0.0
    counts: dict[int, int] = {}
    for d in doubled:
        counts[d] = counts.get(d, 0) + 1
    for t in counts.values():
        tie_term += t ** 3 - t
    variance = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if variance <= 0:  # every value tied
        return 1.0
    w = observed_doubled / 2.0
    # continuity correction of 0.5 toward the mean
    z = (w - mean - math.copysign(0.5, w - mean)) / math.sqrt(variance)
    if (w - mean) * z < 0:  # correction crossed the mean
        z = 0.0
    return min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))


def rank_sum_test(a, b, exact_limit: int = EXACT_LIMIT) -> RankSumResult:
    """Two-sided rank-sum test of samples a and b.

    Exact enumeration when len(a) + len(b) <= exact_limit, otherwise the
    tie-corrected normal approximation.  The returned p always lies in
    (0, 1].
    """
    a, b = list(a), list(b)
    if not a or not b:
        raise ValueError("both samples must be nonempty")
    doubled = _doubled_midranks(a + b)
    observed = sum(doubled[: len(a)])
    if len(doubled) <= exact_limit:
        p = _exact_p(doubled, len(a), observed)
        method = "exact"
    else:
        p = _normal_p(doubled, len(a), observed)
        method = "normal"
    return RankSumResult(statistic=observed / 2.0, p_value=p, method=method)
