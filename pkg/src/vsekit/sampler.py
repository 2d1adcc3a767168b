"""Mini-batch and negative-pool planning.

Randomness comes from numpy's PCG64 generator (``np.random.default_rng``)
seeded with ``[seed, epoch]``; the stream is stable across numpy versions
that keep PCG64 and ``Generator.permutation``/``choice`` semantics.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DatasetTooSmallError, EmptyNegativeSetError


@dataclass(frozen=True)
class SamplerConfig:
    batch_size: int = 128
    neg_pool_size: int = 128
    seed: int = 0
    shuffle_each_epoch: bool = True

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigurationError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.neg_pool_size < 2:
            raise ConfigurationError(f"neg_pool_size must be >= 2, got {self.neg_pool_size}")


@dataclass(frozen=True)
class StepSample:
    """Pair indices for one optimizer step.

    Anchors receive loss terms; the pool supplies negative candidates.
    """

    anchor_indices: np.ndarray
    pool_indices: np.ndarray


def _batches(order, batch_size):
    cuts = list(range(0, len(order), batch_size))
    batches = [order[c:c + batch_size] for c in cuts]
    if len(batches) > 1 and len(batches[-1]) < 2:
        last = batches.pop()
        batches[-1] = np.concatenate([batches[-1], last])
    return batches


def epoch_plan(n_pairs: int, config: SamplerConfig, epoch: int = 0) -> list[StepSample]:
    """Split a seeded shuffle of ``range(n_pairs)`` into steps.

    Pools no larger than the batch are random subsets of it; larger pools
    are the batch plus random extra pairs from outside the batch.
    """
    if n_pairs < 2:
        raise DatasetTooSmallError(f"need at least 2 pairs, got {n_pairs}")
    if n_pairs < config.batch_size:
        raise DatasetTooSmallError(f"{n_pairs} pairs is fewer than batch size {config.batch_size}")
    if config.neg_pool_size > n_pairs:
        raise ConfigurationError(f"neg_pool_size {config.neg_pool_size} exceeds dataset size {n_pairs}")
    rng = np.random.default_rng([config.seed, epoch if config.shuffle_each_epoch else 0])
    order = rng.permutation(n_pairs)
    pool_rng = np.random.default_rng([config.seed, epoch, 1])
    steps = []
    for anchors in _batches(order, config.batch_size):
        size = config.neg_pool_size
        if size <= len(anchors):
            pool = pool_rng.choice(anchors, size=size, replace=False)
        else:
            outside = np.ones(n_pairs, dtype=bool)
            outside[anchors] = False
            extra = pool_rng.choice(np.flatnonzero(outside), size=size - len(anchors), replace=False)
            pool = np.concatenate([anchors, extra])
        steps.append(StepSample(anchors.astype(np.int64), pool.astype(np.int64)))
    return steps


def hardest_in_pool(scores, positive_index: int) -> int:
    """Index of the highest-scoring non-positive entry; ties go to the lowest index."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size < 2:
        raise EmptyNegativeSetError("pool needs at least one negative")
    if not 0 <= positive_index < scores.size:
        raise ConfigurationError(f"positive_index {positive_index} out of range")
    masked = scores.copy()
    masked[positive_index] = -np.inf
    return int(np.argmax(masked))
