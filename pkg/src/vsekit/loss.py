"""Triplet hinge losses over score matrices, with analytic gradients.

Three reductions of the per-negative hinge violations are supported:
sum (SH), max (MH, only the hardest negative per direction contributes)
and a softmax-weighted middle ground (WEIGHTED) whose temperature moves it
between the mean of positive violations and MH.  All totals are means over
anchor pairs.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .errors import ConfigurationError, ContractError, EmptyNegativeSetError
from .model import (
    ProjectionModel,
    SimilarityKind,
    _check_features,
    _finish,
    embedding_backward,
    similarity_matrix,
    similarity_matrix_backward,
)


class LossKind(str, enum.Enum):
    SH = "sh"
    MH = "mh"
    WEIGHTED = "weighted"

    @classmethod
    def parse(cls, value) -> "LossKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigurationError(f"unknown loss kind {value!r}") from None


_KERNEL_CODE = {LossKind.SH: kernels.SH, LossKind.MH: kernels.MH, LossKind.WEIGHTED: kernels.WEIGHTED}


@dataclass(frozen=True)
class LossConfig:
    margin: float = 0.2
    kind: LossKind = LossKind.MH
    tau: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind.parse(self.kind))
        if not np.isfinite(self.margin) or self.margin < 0:
            raise ConfigurationError(f"margin must be >= 0, got {self.margin}")
        if self.kind is LossKind.WEIGHTED and not (np.isfinite(self.tau) and self.tau > 0):
            raise ConfigurationError(f"temperature must be > 0, got {self.tau}")


@dataclass
class BatchLossResult:
    total_loss: float
    per_pair_losses: np.ndarray
    hardest_caption_index: np.ndarray
    hardest_image_index: np.ndarray
    grad_similarity: np.ndarray


class PoolLossResult(NamedTuple):
    total_loss: float
    per_pair_losses: np.ndarray
    hardest_caption_index: np.ndarray
    hardest_image_index: np.ndarray
    grad_positive: np.ndarray
    grad_caption_scores: np.ndarray
    grad_image_scores: np.ndarray


class LossGradients(NamedTuple):
    result: PoolLossResult
    W_f: np.ndarray
    W_g: np.ndarray


def pool_loss(positive, caption_scores, image_scores, exclude, config: LossConfig) -> PoolLossResult:
    """Loss for anchors scored against a negative pool.

    ``caption_scores[k, j]`` = s(anchor image k, pool caption j) and
    ``image_scores[k, j]`` = s(pool image j, anchor caption k).
    ``exclude[k]`` is the pool column of anchor k itself (-1 if absent).
    Gradients are of the mean loss.
    """
    positive = np.asarray(positive, dtype=np.float64)
    caption_scores = np.asarray(caption_scores, dtype=np.float64)
    image_scores = np.asarray(image_scores, dtype=np.float64)
    exclude = np.asarray(exclude, dtype=np.int64)
    n, p = caption_scores.shape
    if image_scores.shape != (n, p) or positive.shape != (n,) or exclude.shape != (n,):
        raise ContractError("pool score arrays have inconsistent shapes")
    if n == 0:
        raise ContractError("no anchors")
    if p == 0 or (p == 1 and np.any(exclude >= 0)):
        raise EmptyNegativeSetError("every anchor needs at least one negative in the pool")
    per_pair, hard_c, hard_i, g_pos, g_cap, g_img = kernels.hinge_terms(
        positive, caption_scores, image_scores, exclude, config.margin, _KERNEL_CODE[config.kind], config.tau
    )
    scale = 1.0 / n
    return PoolLossResult(
        float(per_pair.mean()), per_pair, hard_c, hard_i, g_pos * scale, g_cap * scale, g_img * scale
    )


def _square(S):
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ContractError(f"similarity matrix must be square, got shape {S.shape}")
    if S.shape[0] < 2:
        raise EmptyNegativeSetError("need at least 2 pairs for a negative to exist")
    return S


def batch_loss(S, config: LossConfig) -> BatchLossResult:
    """Loss over a square score matrix whose diagonal holds the positives."""
    S = _square(S)
    n = S.shape[0]
    r = pool_loss(np.diag(S).copy(), S, S.T, np.arange(n), config)
    grad = r.grad_caption_scores + r.grad_image_scores.T
    grad[np.diag_indices(n)] += r.grad_positive
    return BatchLossResult(r.total_loss, r.per_pair_losses, r.hardest_caption_index, r.hardest_image_index, grad)


def sh_loss(S, margin) -> BatchLossResult:
    return batch_loss(S, LossConfig(margin=margin, kind=LossKind.SH))


def mh_loss(S, margin) -> BatchLossResult:
    return batch_loss(S, LossConfig(margin=margin, kind=LossKind.MH))


def weighted_loss(S, margin, tau) -> BatchLossResult:
    return batch_loss(S, LossConfig(margin=margin, kind=LossKind.WEIGHTED, tau=tau))


def loss_gradients(
    model: ProjectionModel,
    similarity_kind,
    image_features,
    caption_features,
    config: LossConfig,
    anchors: Optional[np.ndarray] = None,
    pool: Optional[np.ndarray] = None,
) -> LossGradients:
    """Loss and its gradients with respect to ``W_f`` and ``W_g``.

    Row r of ``image_features``/``caption_features`` is one training pair.
    ``anchors`` and ``pool`` index those rows (both default to all rows);
    the pool supplies negatives and every pool member receives gradient.
    """
    kind = SimilarityKind.parse(similarity_kind)
    x = _check_features(image_features, model.d_img, "image")
    y = _check_features(caption_features, model.d_cap, "caption")
    if x.shape[0] != y.shape[0]:
        raise ContractError("image and caption feature rows must pair up")
    n_rows = x.shape[0]
    anchors = np.arange(n_rows) if anchors is None else np.asarray(anchors, dtype=np.int64)
    pool = np.arange(n_rows) if pool is None else np.asarray(pool, dtype=np.int64)
    where = {int(r): j for j, r in enumerate(pool)}
    exclude = np.array([where.get(int(a), -1) for a in anchors], dtype=np.int64)

    raw_f = x @ model.W_f
    raw_g = y @ model.W_g
    f = _finish(raw_f, model.normalize_image, model.abs_before_similarity, "image")
    g = _finish(raw_g, model.normalize_caption, model.abs_before_similarity, "caption")
    S = similarity_matrix(kind, f, g)

    res = pool_loss(S[anchors, anchors], S[np.ix_(anchors, pool)], S[np.ix_(pool, anchors)].T, exclude, config)

    grad_s = np.zeros_like(S)
    grad_s[np.ix_(anchors, pool)] += res.grad_caption_scores
    grad_s[np.ix_(pool, anchors)] += res.grad_image_scores.T
    grad_s[anchors, anchors] += res.grad_positive
    grad_f, grad_g = similarity_matrix_backward(kind, f, g, grad_s)
    grad_raw_f = embedding_backward(raw_f, grad_f, model.normalize_image, model.abs_before_similarity)
    grad_raw_g = embedding_backward(raw_g, grad_g, model.normalize_caption, model.abs_before_similarity)
    return LossGradients(res, x.T @ grad_raw_f, y.T @ grad_raw_g)
