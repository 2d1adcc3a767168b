"""Adam with bias correction and a single step-drop learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError, NumericError


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float = 2e-4
    drop_epoch: int = 15
    drop_factor: float = 10.0
    total_epochs: int = 30

    def __post_init__(self):
        if not self.base_lr > 0:
            raise ConfigurationError(f"base_lr must be > 0, got {self.base_lr}")
        if not self.drop_factor >= 1:
            raise ConfigurationError(f"drop_factor must be >= 1, got {self.drop_factor}")
        if self.total_epochs < 1:
            raise ConfigurationError(f"total_epochs must be >= 1, got {self.total_epochs}")
        if not 0 <= self.drop_epoch <= self.total_epochs:
            raise ConfigurationError(f"drop_epoch {self.drop_epoch} outside [0, {self.total_epochs}]")


def lr_at(schedule: LrSchedule, epoch: int) -> float:
    if not 0 <= epoch < schedule.total_epochs:
        raise ContractError(f"epoch {epoch} outside [0, {schedule.total_epochs})")
    if epoch < schedule.drop_epoch:
        return schedule.base_lr
    return schedule.base_lr / schedule.drop_factor


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, grads: dict, lr: float):
    """Apply one Adam update in place and return ``(params, state)``.

    Non-finite gradients raise :class:`NumericError` before anything is
    touched.
    """
    if not lr > 0:
        raise ContractError(f"learning rate must be > 0, got {lr}")
    for name, p in params.items():
        g = grads[name]
        if np.shape(g) != np.shape(p):
            raise ContractError(f"gradient shape {np.shape(g)} does not match parameter {name} {np.shape(p)}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}; step refused")

    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if isinstance(p, np.ndarray) and p.ndim > 0:
            p -= update
        else:
            params[name] = p - update
    return params, state
