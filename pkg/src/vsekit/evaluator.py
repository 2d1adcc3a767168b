"""Bidirectional retrieval metrics: R@K, median rank, mean rank, rsum.

Ranks are optimistic: an item only loses places to strictly higher scores,
and with several ground-truth captions the best-ranked one counts.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError, ContractError
from .model import ProjectionModel, embed_captions, embed_images, similarity_matrix

KS = (1, 5, 10)


@dataclass(frozen=True)
class DirectionReport:
    r_at: dict
    med_r: float
    mean_r: float


@dataclass(frozen=True)
class RetrievalReport:
    caption_retrieval: DirectionReport
    image_retrieval: DirectionReport
    rsum: float

    def flat(self) -> dict:
        """Ordered flat mapping used for CSV rows and key=value output."""
        c, i = self.caption_retrieval, self.image_retrieval
        out = {}
        for k in KS:
            out[f"r{k}_cap"] = c.r_at[k]
        for k in KS:
            out[f"r{k}_img"] = i.r_at[k]
        out.update(medr_cap=c.med_r, medr_img=i.med_r, meanr_cap=c.mean_r, meanr_img=i.mean_r, rsum=self.rsum)
        return out

    @classmethod
    def from_flat(cls, d: dict) -> "RetrievalReport":
        cap = DirectionReport({k: d[f"r{k}_cap"] for k in KS}, d["medr_cap"], d["meanr_cap"])
        img = DirectionReport({k: d[f"r{k}_img"] for k in KS}, d["medr_img"], d["meanr_img"])
        return cls(cap, img, sum(cap.r_at.values()) + sum(img.r_at.values()))


@dataclass(frozen=True)
class EvalProtocol:
    cpi: int = 5
    folds: int = 1
    fold_size: int = 0

    def __post_init__(self):
        if self.cpi < 1:
            raise ConfigurationError(f"cpi must be positive, got {self.cpi}")
        if self.folds < 1:
            raise ConfigurationError(f"folds must be >= 1, got {self.folds}")
        if self.folds > 1 and self.fold_size < 1:
            raise ConfigurationError("fold_size must be positive when folds > 1")


def rank_of_positive(scores, positive_indices) -> int:
    scores = np.asarray(scores, dtype=np.float64)
    idx = np.asarray(list(positive_indices), dtype=np.int64)
    if idx.size == 0:
        raise ContractError("positive set is empty")
    if idx.min() < 0 or idx.max() >= scores.size:
        raise ContractError("positive index out of range")
    return int(1 + np.count_nonzero(scores > scores[idx].max()))


def _direction(ranks) -> DirectionReport:
    ranks = np.asarray(ranks)
    r_at = {k: 100.0 * np.count_nonzero(ranks <= k) / ranks.size for k in KS}
    return DirectionReport(r_at, float(np.median(ranks)), float(ranks.mean()))


def report_from_ranks(caption_ranks, image_ranks) -> RetrievalReport:
    cap = _direction(caption_ranks)
    img = _direction(image_ranks)
    return RetrievalReport(cap, img, sum(cap.r_at.values()) + sum(img.r_at.values()))


def evaluate_scores(scores, cpi: int) -> RetrievalReport:
    """Report for an images x captions score matrix with block ground truth."""
    scores = np.asarray(scores, dtype=np.float64)
    n_i, n_c = scores.shape
    if n_c != n_i * cpi:
        raise ContractError(f"{n_c} captions do not match {n_i} images x {cpi} captions per image")
    cap_ranks, img_ranks = kernels.retrieval_ranks(scores, cpi)
    return report_from_ranks(cap_ranks, img_ranks)


def evaluate(model: ProjectionModel, kind, images, captions, protocol: EvalProtocol = EvalProtocol()) -> RetrievalReport:
    images = np.asarray(images)
    captions = np.asarray(captions)
    if captions.shape[0] != images.shape[0] * protocol.cpi:
        raise ContractError(
            f"{captions.shape[0]} captions do not match {images.shape[0]} images x {protocol.cpi}"
        )
    f = embed_images(model, images)
    g = embed_captions(model, captions)
    return evaluate_scores(similarity_matrix(kind, f, g), protocol.cpi)


def average_reports(reports) -> RetrievalReport:
    reports = list(reports)
    keys = reports[0].flat().keys()
    return RetrievalReport.from_flat({k: float(np.mean([r.flat()[k] for r in reports])) for k in keys})


def fold_reports(model, kind, images, captions, protocol: EvalProtocol) -> list:
    """One report per contiguous block of ``fold_size`` images."""
    if protocol.folds == 1:
        return [evaluate(model, kind, images, captions, protocol)]
    n_i = len(images)
    if protocol.folds * protocol.fold_size > n_i:
        raise ContractError(f"{protocol.folds} folds x {protocol.fold_size} images exceeds {n_i} images")
    cpi = protocol.cpi
    single = EvalProtocol(cpi=cpi)
    out = []
    for f in range(protocol.folds):
        lo, hi = f * protocol.fold_size, (f + 1) * protocol.fold_size
        out.append(evaluate(model, kind, images[lo:hi], captions[lo * cpi:hi * cpi], single))
    return out


def evaluate_folds(model, kind, images, captions, protocol: EvalProtocol) -> RetrievalReport:
    return average_reports(fold_reports(model, kind, images, captions, protocol))
