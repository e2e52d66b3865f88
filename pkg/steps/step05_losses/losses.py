# steps/step05_losses/losses.py
"""
Verlustterme:
    l_cls  -1/2 * Summe der binären Kreuzentropie über positive und negative Anker
    l_reg  L1 zwischen vorhergesagten und Ziel-Deltas, gemittelt über die Positiven
    l_loc  -1/2 * Summe der binären Kreuzentropie gegen die Gauß-Zentrumskarte
    total  lambda_cls*l_cls + lambda_reg*l_reg + lambda_loc*l_loc
Negative Paare: l_reg und l_loc werden auf 0 gesetzt.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from steps.step01_numerics import ops
from steps.step01_numerics.tensor import ShapeError, Tensor
from steps.step03_heads.heads import BranchOutputs
from steps.step04_anchors.anchors import MatchLabels

from .targets import CenterTargetMap


class LossConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    lambda_cls: float = Field(1.0, ge=0.0)
    lambda_reg: float = Field(1.0, ge=0.0)
    lambda_loc: float = Field(1.0, ge=0.0)
    log_eps: float = Field(1e-7, gt=0.0)
    center_min_overlap: float = Field(0.7, gt=0.0, lt=1.0)

    @property
    def lambdas(self) -> Tuple[float, float, float]:
        return (self.lambda_cls, self.lambda_reg, self.lambda_loc)


@dataclass(frozen=True)
class LossBreakdown:
    l_cls: float
    l_reg: float
    l_loc: float
    lambdas: Tuple[float, float, float]
    total: float
    graph: Optional[Tensor] = field(default=None, compare=False, repr=False)

    def as_record(self) -> dict:
        return {"l_cls": self.l_cls, "l_reg": self.l_reg, "l_loc": self.l_loc, "total": self.total}


def _zero() -> Tensor:
    return Tensor(0.0)


def _binary_ce(prob_fg: Tensor, prob_bg: Tensor, fg_weights: np.ndarray, bg_weights: np.ndarray, eps: float) -> Tensor:
    """-1/2 * sum[ w_fg * log p + w_bg * log(1 - p) ], 1 - p als Hintergrund-Softmax."""
    pos = ops.dot_const(ops.log_clipped(prob_fg, eps), fg_weights)
    neg = ops.dot_const(ops.log_clipped(prob_bg, eps), bg_weights)
    return ops.scale(ops.add(pos, neg), -0.5)


def loss_cls(o_cls: Tensor, labels: MatchLabels, eps: float = 1e-7) -> Tensor:
    k2, h, w = o_cls.shape
    k = k2 // 2
    if labels.labels.shape != (k, h, w):
        raise ShapeError(f"loss_cls: Labels {labels.labels.shape} passen nicht zu O_cls {o_cls.shape}")
    probs = ops.softmax(ops.reshape(o_cls, (2, k, h, w)), axis=0)
    fg = ops.crop(probs, (1,))
    bg = ops.crop(probs, (0,))
    return _binary_ce(fg, bg, labels.positive.astype(np.float64), labels.negative.astype(np.float64), eps)


def loss_reg(o_reg: Tensor, labels: MatchLabels) -> Tensor:
    k4, h, w = o_reg.shape
    k = k4 // 4
    if labels.targets.shape != (4, k, h, w):
        raise ShapeError(f"loss_reg: Ziele {labels.targets.shape} passen nicht zu O_reg {o_reg.shape}")
    n = labels.num_pos
    if n == 0:
        return _zero()
    pred = ops.reshape(o_reg, (4, k, h, w))
    diff = ops.abs_(ops.sub(pred, Tensor(labels.targets)))
    mask = np.broadcast_to(labels.positive, (4, k, h, w)).astype(np.float64)
    return ops.scale(ops.dot_const(diff, mask), 1.0 / n)


def loss_loc(o_loc: Tensor, target: CenterTargetMap, eps: float = 1e-7) -> Tensor:
    if o_loc.shape != (2, *target.values.shape):
        raise ShapeError(f"loss_loc: O_loc {o_loc.shape} passt nicht zu Zielkarte {target.values.shape}")
    probs = ops.softmax(o_loc, axis=0)
    return _binary_ce(ops.crop(probs, (1,)), ops.crop(probs, (0,)), target.values, 1.0 - target.values, eps)


def loss_total(
    l_cls: Tensor,
    l_reg: Tensor,
    l_loc: Tensor,
    cfg: LossConfig = LossConfig(),
    *,
    is_positive: bool = True,
) -> LossBreakdown:
    lc, lr, ll = cfg.lambdas
    if not is_positive:
        l_reg, l_loc = _zero(), _zero()
    graph = ops.add(ops.add(ops.scale(l_cls, lc), ops.scale(l_reg, lr)), ops.scale(l_loc, ll))
    c, r, o = l_cls.item(), l_reg.item(), l_loc.item()
    return LossBreakdown(c, r, o, cfg.lambdas, lc * c + lr * r + ll * o, graph)


def compute_losses(
    outputs: BranchOutputs,
    labels: MatchLabels,
    center_map: CenterTargetMap,
    is_positive: bool,
    cfg: LossConfig = LossConfig(),
) -> LossBreakdown:
    l_cls = loss_cls(outputs.cls, labels, cfg.log_eps)
    if not is_positive:
        return loss_total(l_cls, _zero(), _zero(), cfg, is_positive=False)
    return loss_total(l_cls, loss_reg(outputs.reg, labels), loss_loc(outputs.loc, center_map, cfg.log_eps), cfg)
