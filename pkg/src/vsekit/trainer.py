"""Training loop with validation-rsum snapshot selection."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .datagen import PairedFeatureSet
from .errors import ConfigurationError, ContractError, NumericError
from .evaluator import EvalProtocol, RetrievalReport, evaluate
from .loss import LossConfig, LossKind, loss_gradients
from .model import ProjectionModel, SimilarityKind
from .optimizer import AdamState, LrSchedule, adam_step, lr_at
from .sampler import SamplerConfig, epoch_plan

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 1024
    similarity: SimilarityKind = SimilarityKind.INNER_PRODUCT
    normalize_image: bool = True
    normalize_caption: bool = True
    abs_before_similarity: bool = False

    def __post_init__(self):
        object.__setattr__(self, "similarity", SimilarityKind.parse(self.similarity))
        if self.dim < 1:
            raise ConfigurationError(f"embedding dim must be positive, got {self.dim}")

    def flags(self) -> dict:
        return dict(
            normalize_image=self.normalize_image,
            normalize_caption=self.normalize_caption,
            abs_before_similarity=self.abs_before_similarity,
        )


@dataclass(frozen=True)
class TrainConfig:
    loss: LossConfig = LossConfig()
    sampler: SamplerConfig = SamplerConfig()
    schedule: LrSchedule = LrSchedule()
    model: ModelConfig = ModelConfig()
    curriculum_switch_epoch: Optional[int] = None
    eval_every: int = 1
    seed: int = 0
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        sw = self.curriculum_switch_epoch
        if sw is not None and not 1 <= sw < self.schedule.total_epochs:
            raise ConfigurationError(
                f"curriculum switch epoch {sw} outside [1, {self.schedule.total_epochs})"
            )
        if self.eval_every < 1:
            raise ConfigurationError(f"eval_every must be >= 1, got {self.eval_every}")


@dataclass
class Snapshot:
    epoch: int
    model: ProjectionModel
    report: RetrievalReport
    rsum: float


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    report: Optional[RetrievalReport]
    lr: float
    seconds: float


@dataclass
class TrainingTrace:
    records: list = field(default_factory=list)


class TrainingAborted(NumericError):
    """Training hit a numeric failure; ``trace`` holds the completed epochs."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


def apply_curriculum(config: TrainConfig, epoch: int) -> LossKind:
    if config.curriculum_switch_epoch is not None and epoch < config.curriculum_switch_epoch:
        return LossKind.SH
    return config.loss.kind


def _step_rows(anchors, pool):
    """Feature rows for a step and the anchor/pool positions within them."""
    rows = pool if len(pool) > len(anchors) else anchors
    where = {int(r): i for i, r in enumerate(rows)}
    a = np.array([where[int(r)] for r in anchors], dtype=np.int64)
    p = np.array([where[int(r)] for r in pool], dtype=np.int64)
    return rows, a, p


def train(
    train_set: PairedFeatureSet,
    val_set: PairedFeatureSet,
    config: TrainConfig,
    init_model: Optional[ProjectionModel] = None,
    clock=time.perf_counter,
):
    """Run the configured epochs; return ``(best_snapshot, trace)``.

    The best snapshot maximizes validation rsum, earliest epoch on ties.
    """
    sched = config.schedule
    if train_set.n_pairs < config.sampler.batch_size:
        raise ContractError(
            f"training split has {train_set.n_pairs} pairs, fewer than batch size {config.sampler.batch_size}"
        )
    if val_set.n_images < 2:
        raise ContractError("validation split needs at least 2 images")
    mc = config.model
    if init_model is None:
        model = ProjectionModel.initialize(
            train_set.image_features.shape[1], train_set.caption_features.shape[1], mc.dim, seed=config.seed, **mc.flags()
        )
    else:
        model = init_model.copy()
    kind = mc.similarity
    state = AdamState(beta1=config.adam_betas[0], beta2=config.adam_betas[1], eps=config.adam_eps)
    protocol = EvalProtocol(cpi=val_set.cpi)
    trace = TrainingTrace()
    best = None

    for epoch in range(sched.total_epochs):
        start = clock()
        lr = lr_at(sched, epoch)
        loss_cfg = replace(config.loss, kind=apply_curriculum(config, epoch))
        losses = []
        for step in epoch_plan(train_set.n_pairs, config.sampler, epoch):
            rows, a, p = _step_rows(step.anchor_indices, step.pool_indices)
            x, y = train_set.pair_features(rows)
            lg = loss_gradients(model, kind, x, y, loss_cfg, a, p)
            try:
                adam_step(state, model.params(), {"W_f": lg.W_f, "W_g": lg.W_g}, lr)
            except NumericError as exc:
                raise TrainingAborted(f"epoch {epoch}: {exc}", trace) from exc
            losses.append(lg.result.total_loss)
        train_loss = float(np.mean(losses))
        if not np.isfinite(train_loss):
            raise TrainingAborted(f"epoch {epoch}: non-finite training loss", trace)

        report = None
        if (epoch + 1) % config.eval_every == 0 or epoch == sched.total_epochs - 1:
            report = evaluate(model, kind, val_set.image_features, val_set.caption_features, protocol)
            if best is None or report.rsum > best.rsum:
                best = Snapshot(epoch, model.copy(), report, report.rsum)
        trace.records.append(EpochRecord(epoch, train_loss, report, lr, clock() - start))
        log.info("epoch %d loss %.6f lr %g rsum %s", epoch, train_loss, lr, None if report is None else f"{report.rsum:.2f}")
    return best, trace
