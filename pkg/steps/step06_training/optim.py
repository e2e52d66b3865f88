# steps/step06_training/optim.py
"""SGD mit Momentum/Weight Decay und Lernratenplan je Trainingsstufe."""

from __future__ import annotations

from typing import Dict, Iterable, Mapping, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from steps.step01_numerics.params import ParamStore
from steps.step01_numerics.tensor import ShapeError


class LrScheduleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    start_lr: float = Field(0.001, gt=0.0)
    peak_lr: float = Field(0.005, gt=0.0)
    end_lr: float = Field(0.0005, gt=0.0)
    warmup_epochs: int = Field(5, ge=1)
    total_epochs: int = Field(20, ge=1)

    @model_validator(mode="after")
    def _check_epochs(self) -> "LrScheduleConfig":
        if self.warmup_epochs > self.total_epochs:
            raise ValueError(f"warmup_epochs {self.warmup_epochs} > total_epochs {self.total_epochs}")
        return self


def lr_schedule(epoch: int, cfg: LrScheduleConfig = LrScheduleConfig()) -> float:
    """Lineares Warmup start -> peak (Epochen 1..warmup), danach log-linear peak -> end."""
    if not 1 <= epoch <= cfg.total_epochs:
        raise ValueError(f"Epoche {epoch} außerhalb 1..{cfg.total_epochs}")
    if epoch <= cfg.warmup_epochs:
        if cfg.warmup_epochs == 1:
            return cfg.peak_lr
        f = (epoch - 1) / (cfg.warmup_epochs - 1)
        return (1.0 - f) * cfg.start_lr + f * cfg.peak_lr
    if epoch == cfg.total_epochs:
        return cfg.end_lr
    f = (epoch - cfg.warmup_epochs) / (cfg.total_epochs - cfg.warmup_epochs)
    return float(np.exp((1.0 - f) * np.log(cfg.peak_lr) + f * np.log(cfg.end_lr)))


def sgd_step(
    param: np.ndarray,
    grad: np.ndarray,
    velocity: np.ndarray,
    lr: float,
    momentum: float,
    weight_decay: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """v <- m*v + g + wd*p ; p <- p - lr*v."""
    if not (param.shape == grad.shape == velocity.shape):
        raise ShapeError(f"sgd_step: {param.shape}, {grad.shape}, {velocity.shape}")
    v = momentum * velocity + grad + weight_decay * param
    return param - lr * v, v


class SGD:
    """Hält die Geschwindigkeiten pro Parametername; aktualisiert nur die übergebenen Namen."""

    def __init__(self, momentum: float = 0.9, weight_decay: float = 1e-4) -> None:
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity: Dict[str, np.ndarray] = {}

    def step(self, params: ParamStore, grads: Mapping[str, np.ndarray], lr: float, names: Iterable[str]) -> None:
        for name in names:
            t = params[name]
            v = self.velocity.get(name)
            if v is None:
                v = np.zeros_like(t.data)
            new_p, self.velocity[name] = sgd_step(t.data, grads[name], v, lr, self.momentum, self.weight_decay)
            t.assign_(new_p)


def clip_grad_norm(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    """Globale L2-Norm begrenzen (in place); liefert die Norm vor dem Clipping."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm > 0 and norm > max_norm:
        factor = max_norm / (norm + 1e-12)
        for name in grads:
            grads[name] = grads[name] * factor
    return norm
