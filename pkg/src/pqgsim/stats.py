"""Small statistics helpers shared by the CLI checks and the test suite.

The package-wide convention for Monte Carlo pass/fail is three sigma
(normal approximation); goodness-of-fit tests use the matching
chi-square quantile.
"""

from __future__ import annotations

import math

import numpy as np

# 0.9973 quantile (two-sided three-sigma equivalent) of the chi-square
# distribution, by degrees of freedom.
CHI2_3SIGMA = {
    1: 8.999861956749672,
    3: 14.1562525005409,
    7: 21.84639107125362,
    9: 25.256663611356526,
    15: 34.714297143777436,
    31: 57.398931464741466,
    63: 98.72799305105876,
}


def binomial_sigma(p: float, n: int) -> float:
    """Standard error of an empirical frequency with success probability p."""
    return math.sqrt(p * (1.0 - p) / n)


def within_three_sigma(measured: float, expected: float, sigma: float) -> bool:
    return abs(measured - expected) <= 3.0 * sigma


def chi2_statistic(observed, expected_probs, total: int) -> float:
    """Pearson chi-square of observed counts against expected probabilities."""
    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(expected_probs, dtype=float) * total
    if observed.shape != expected.shape:
        raise ValueError("observed and expected shapes differ")
    if np.any(expected <= 0):
        raise ValueError("expected counts must be positive in every bin")
    return float(np.sum((observed - expected) ** 2 / expected))


def geometric_tail_bins(counts, max_bin: int):
    """Histogram counts into bins 1..max_bin-1 plus a >= max_bin tail.

    Returns (observed counts, geometric(1/2) probabilities) ready for
    ``chi2_statistic`` with df = max_bin - 1.
    """
    counts = np.asarray(counts)
    observed = [int(np.sum(counts == k)) for k in range(1, max_bin)]
    observed.append(int(np.sum(counts >= max_bin)))
    probs = [2.0 ** (-k) for k in range(1, max_bin)]
    probs.append(2.0 ** (-(max_bin - 1)))
    return np.asarray(observed), np.asarray(probs)
