"""Local update rules: SGD with momentum and weight decay, optional LARS
layer-wise scaling, linear warm-up, and gradient accumulation."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import DivergedError, InvalidInputError
from .gossip import WorkerState
from .model_core import LayerShape

# Hyperparameters of the reference ImageNet/ResNet-50 run. Kept for record and
# for tests; simulation defaults live in RunConfig.
RESNET50_LARS_COEFF = 0.0025
RESNET50_LEARNING_RATE = 9.0
RESNET50_WEIGHT_DECAY = 5e-5
RESNET50_MOMENTUM = 0.96
RESNET50_WARMUP_EPOCHS = 36
RESNET50_TRAINING_EPOCHS = 90
RESNET50_COMM_INTERVAL = 42


@dataclass(frozen=True)
class OptimizerConfig:
    base_lr: float = 0.1
    momentum: float = 0.0
    weight_decay: float = 0.0
    lars_coeff: Optional[float] = None  # None disables LARS
    warmup_epochs: int = 0
    comm_interval: int = 1
    epsilon: float = 1e-9

    def __post_init__(self):
        if not self.base_lr > 0:
            raise InvalidInputError(f"base_lr must be positive, got {self.base_lr}")
        if not 0 <= self.momentum < 1:
            raise InvalidInputError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise InvalidInputError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if self.lars_coeff is not None and self.lars_coeff < 0:
            raise InvalidInputError(f"lars_coeff must be nonnegative, got {self.lars_coeff}")
        if self.warmup_epochs < 0:
            raise InvalidInputError(f"warmup_epochs must be nonnegative, got {self.warmup_epochs}")
        if self.comm_interval < 1:
            raise InvalidInputError(f"comm_interval must be >= 1, got {self.comm_interval}")
        if self.epsilon < 0:
            raise InvalidInputError(f"epsilon must be nonnegative, got {self.epsilon}")

    @property
    def lars_enabled(self) -> bool:
        return self.lars_coeff is not None


def lars_local_lr(weight_norm: float, grad_norm: float, cfg: OptimizerConfig) -> float:
    """Layer-wise trust ratio.

    Falls back to 1 when either norm is zero, so freshly zeroed layers and
    converged layers still move at the global rate.
    """
    if weight_norm == 0 or grad_norm == 0 or not cfg.lars_enabled:
        return 1.0
    return cfg.lars_coeff * weight_norm / (grad_norm + cfg.weight_decay * weight_norm + cfg.epsilon)


def layer_scales(params: np.ndarray, grads: np.ndarray, layers: Sequence[LayerShape], cfg: OptimizerConfig) -> np.ndarray:
    if not cfg.lars_enabled:
        return np.ones(len(layers))
    scales = np.empty(len(layers))
    offset = 0
    for i, layer in enumerate(layers):
        sl = slice(offset, offset + layer.length)
        offset += layer.length
        scales[i] = lars_local_lr(float(np.linalg.norm(params[sl])), float(np.linalg.norm(grads[sl])), cfg)
    return scales


def warmup_lr(epoch: float, cfg: OptimizerConfig) -> float:
    if cfg.warmup_epochs == 0:
        return cfg.base_lr
    return cfg.base_lr * min(1.0, (epoch + 1) / cfg.warmup_epochs)


def sgd_momentum_step(
    params: np.ndarray,
    momentum_buf: np.ndarray,
    grads: np.ndarray,
    scales: np.ndarray,
    layers: Sequence[LayerShape],
    cfg: OptimizerConfig,
    epoch: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Return updated ``(params, momentum_buf)``; inputs are left untouched.

    m <- momentum * m + (g + weight_decay * w);  w <- w - lr * scale * m
    """
    if not np.all(np.isfinite(grads)):
        raise DivergedError("non-finite gradient")
    if len(scales) != len(layers):
        raise InvalidInputError(f"{len(scales)} scales for {len(layers)} layers")
    lr = warmup_lr(epoch, cfg)
    per_elem = np.repeat(np.asarray(scales, dtype=np.float64), [l.length for l in layers])
    m = cfg.momentum * momentum_buf + (grads + cfg.weight_decay * params)
    w = params - lr * per_elem * m
    if not np.all(np.isfinite(w)):
        raise DivergedError("parameters became non-finite")
    return w, m


def apply_step(
    state: WorkerState,
    grad: np.ndarray,
    layers: Sequence[LayerShape],
    cfg: OptimizerConfig,
    epoch: float = 0.0,
) -> WorkerState:
    scales = layer_scales(state.params, grad, layers, cfg)
    w, m = sgd_momentum_step(state.params, state.momentum, grad, scales, layers, cfg, epoch)
    return replace(state, params=w, momentum=m)


def accumulate_and_flush(
    state: WorkerState, grad: np.ndarray, cfg: OptimizerConfig
) -> tuple[WorkerState, Optional[np.ndarray]]:
    """Add ``grad`` to the accumulator; every ``comm_interval`` calls emit the mean."""
    acc = state.grad_accumulator + grad
    count = state.accum_count + 1
    if count < cfg.comm_interval:
        return replace(state, grad_accumulator=acc, accum_count=count), None
    flushed = acc / cfg.comm_interval
    return replace(state, grad_accumulator=np.zeros_like(acc), accum_count=0), flushed

