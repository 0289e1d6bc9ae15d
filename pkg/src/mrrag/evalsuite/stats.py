"""Rank statistics for benchmark comparisons.

Two-sided Wilcoxon rank-sum with midranks for ties: exact permutation
enumeration when the pooled sample is small (n + m <= 12), normal
approximation with tie-corrected variance otherwise. Effect sizes use the
Vargha-Delaney A12 probability with the conventional 0.06 / 0.14 / 0.21
magnitude thresholds. Pearson correlation reports None when either sample
has zero variance.
"""

from __future__ import annotations

import math
from itertools import combinations

MAGNITUDE_NEGLIGIBLE = "negligible"
MAGNITUDE_SMALL = "small"
MAGNITUDE_MEDIUM = "medium"
MAGNITUDE_LARGE = "large"

EXACT_LIMIT = 12


def midranks(values: list[float]) -> list[float]:
    """1-based ranks with ties sharing their average rank."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        # positions i..j (0-based) share ranks i+1..j+1
        shared = (i + j + 2) / 2.0
        for pos in range(i, j + 1):
            ranks[order[pos]] = shared
        i = j + 1
    return ranks


def _doubled_midranks(values: list[float]) -> list[int]:
    # midranks are integers or half-integers; doubling keeps arithmetic exact
    return [int(round(2.0 * r)) for r in midranks(values)]


def _exact_p(xs: list[float], ys: list[float]) -> float:
    pooled = list(xs) + list(ys)
    doubled = _doubled_midranks(pooled)
    n, total = len(xs), len(pooled)
    observed = sum(doubled[:n])
    mean2 = n * (total + 1)  # doubled-rank sum expectation
    observed_dev = abs(observed - mean2)
    extreme = 0
    splits = 0
    for subset in combinations(range(total), n):
        splits += 1
        if abs(sum(doubled[i] for i in subset) - mean2) >= observed_dev:
            extreme += 1
    return extreme / splits


def _normal_p(xs: list[float], ys: list[float]) -> float:
    pooled = list(xs) + list(ys)
    ranks = midranks(pooled)
    n, m = len(xs), len(ys)
    total = n + m
    rank_sum = math.fsum(ranks[:n])
    mean = n * (total + 1) / 2.0
    # tie-corrected variance of the rank sum
    tie_term = 0.0
    seen: dict[float, int] = {}
    for value in pooled:
        seen[value] = seen.get(value, 0) + 1
    for count in seen.values():
        tie_term += count**3 - count
    variance = (n * m / 12.0) * ((total + 1) - tie_term / (total * (total - 1)))
    if variance <= 0.0:
        return 1.0
    z = (rank_sum - mean) / math.sqrt(variance)
    return math.erfc(abs(z) / math.sqrt(2.0))


def wilcoxon_rank_sum(xs: list[float], ys: list[float], mode: str = "auto") -> float:
    """Two-sided rank-sum p-value.

    ``mode`` forces "exact" (full permutation enumeration) or "normal"
    (tie-corrected gaussian approximation); "auto" picks exact when
    n + m <= 12. Identical pooled values carry no ordering information
    and return 1.0.
    """
    if not xs or not ys:
        raise ValueError("both samples must be non-empty")
    if mode not in ("auto", "exact", "normal"):
        raise ValueError(f"unknown mode {mode!r}")
    pooled = list(xs) + list(ys)
    if all(v == pooled[0] for v in pooled):
        return 1.0
    if mode == "auto":
        mode = "exact" if len(pooled) <= EXACT_LIMIT else "normal"
    return _exact_p(xs, ys) if mode == "exact" else _normal_p(xs, ys)


def a12_magnitude(a12: float) -> str:
    deviation = abs(a12 - 0.5)
    if deviation >= 0.21:
        return MAGNITUDE_LARGE
    if deviation >= 0.14:
        return MAGNITUDE_MEDIUM
    if deviation >= 0.06:
        return MAGNITUDE_SMALL
    return MAGNITUDE_NEGLIGIBLE


def vargha_delaney_a12(xs: list[float], ys: list[float]) -> tuple[float, str]:
    """P(x > y) + 0.5 P(x = y) over all cross pairs, with magnitude label."""
    if not xs or not ys:
        raise ValueError("both samples must be non-empty")
    greater = 0
    ties = 0
    for x in xs:
        for y in ys:
            if x > y:
                greater += 1
            elif x == y:
                ties += 1
    a12 = (greater + 0.5 * ties) / (len(xs) * len(ys))
    return a12, a12_magnitude(a12)


def pearson(xs: list[float], ys: list[float]) -> float | None:
    """Product-moment correlation; None when either sample is constant."""
    if len(xs) != len(ys):
        raise ValueError("samples must pair up")
    n = len(xs)
    if n < 2:
        return None
    mean_x = math.fsum(xs) / n
    mean_y = math.fsum(ys) / n
    dx = [x - mean_x for x in xs]
    dy = [y - mean_y for y in ys]
    var_x = math.fsum(d * d for d in dx)
    var_y = math.fsum(d * d for d in dy)
    if var_x == 0.0 or var_y == 0.0:
        return None
    r = math.fsum(a * b for a, b in zip(dx, dy)) / math.sqrt(var_x * var_y)
    return max(-1.0, min(1.0, r))
