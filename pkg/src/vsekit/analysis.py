"""How likely is a mini-batch to miss the top percentile of negatives?

With ``M`` pairs in a batch a query sees ``M - 1`` negatives.  If each one
independently misses the top ``1 - q`` mass with probability ``q``, the
batch contains no hard negative with probability ``q ** (M - 1)``.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError


class MonteCarloEstimate(NamedTuple):
    estimate: float
    stderr: float
    trials: int


def _check_q(q):
    if not 0 < q < 1:
        raise ConfigurationError(f"q must lie in (0, 1), got {q}")


def miss_probability(q: float, M: int) -> float:
    _check_q(q)
    if M < 1:
        raise ConfigurationError(f"batch size must be >= 1, got {M}")
    return q ** (M - 1)


def min_batch_for(q: float, eps: float) -> int:
    """Smallest batch size ``M`` with ``q ** (M - 1) < eps``."""
    _check_q(q)
    if not 0 < eps < 1:
        raise ConfigurationError(f"eps must lie in (0, 1), got {eps}")
    M = 1 + math.ceil(math.log(eps) / math.log(q))
    # float log can land one off either side of the boundary
    while M > 1 and miss_probability(q, M - 1) < eps:
        M -= 1
    while miss_probability(q, M) >= eps:
        M += 1
    return M


def monte_carlo_miss(q: float, M: int, trials: int = 100_000, seed: int = 0, chunk: int = 1 << 22) -> MonteCarloEstimate:
    """Simulate ``M - 1`` uniform draws per trial; count trials with no draw above ``q``."""
    _check_q(q)
    if trials < 1000:
        raise ConfigurationError(f"need at least 1000 trials, got {trials}")
    if M <= 1:
        return MonteCarloEstimate(1.0, 0.0, trials)
    rng = np.random.default_rng(seed)
    draws = M - 1
    per_chunk = max(1, chunk // draws)
    misses = 0
    done = 0
    while done < trials:
        n = min(per_chunk, trials - done)
        u = rng.random((n, draws))
        misses += int(np.count_nonzero((u < q).all(axis=1)))
        done += n
    p = misses / trials
    return MonteCarloEstimate(p, math.sqrt(p * (1 - p) / trials), trials)
