# steps/step03_heads/attention.py
"""
Multi-Skalen-Attention: je Zweig ein Gewichtsvektor gamma[L].

    concat(L Maps) -> 3x3 conv s2 -> ReLU -> 3x3 conv s2 -> GAP -> FC -> softmax

Varianten (mode):
    computed  Standard, gamma aus den Maps berechnet
    uniform   gamma = 1/L (Training Stufe 1-2)
    sigmoid   wie computed, aber sigmoid statt softmax (nicht normiert)
    free      gamma = softmax(freie Logits), unabhängig von den Maps
"""

from __future__ import annotations

from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from steps.step01_numerics import ops
from steps.step01_numerics.params import ParamStore, Params
from steps.step01_numerics.tensor import ShapeError, Tensor
from steps.step02_backbone.backbone import he_normal

AttentionMode = Literal["computed", "uniform", "sigmoid", "free"]


class AttentionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    mode: AttentionMode = "computed"
    hidden: int = Field(8, gt=0)


def branch_channels(anchor_num: int) -> dict[str, int]:
    return {"cls": 2 * anchor_num, "reg": 4 * anchor_num, "loc": 2}


def init_attention_params(
    store: ParamStore, levels: int, anchor_num: int, cfg: AttentionConfig, rng: np.random.Generator
) -> None:
    for branch, ch in branch_channels(anchor_num).items():
        p = f"attention.{branch}"
        if cfg.mode == "uniform":
            continue
        if cfg.mode == "free":
            store.add(f"{p}.free", np.zeros(levels))
            continue
        store.add(f"{p}.conv1.weight", he_normal(rng, (cfg.hidden, levels * ch, 3, 3)))
        store.add(f"{p}.conv1.bias", np.zeros(cfg.hidden))
        store.add(f"{p}.conv2.weight", he_normal(rng, (cfg.hidden, cfg.hidden, 3, 3)))
        store.add(f"{p}.conv2.bias", np.zeros(cfg.hidden))
        # FC startet bei Null -> gamma = 1/L zu Beginn von Stufe 3
        store.add(f"{p}.fc.weight", np.zeros((levels, cfg.hidden)))
        store.add(f"{p}.fc.bias", np.zeros(levels))


def attention_logits(level_maps: Sequence[Tensor], params: Params, branch: str) -> Tensor:
    if not level_maps:
        raise ShapeError("attention_weights: keine Level-Maps")
    shape = level_maps[0].shape
    for m in level_maps[1:]:
        if m.shape != shape:
            raise ShapeError(f"attention_weights: Level-Maps {shape} vs {m.shape}")
    p = f"attention.{branch}"
    x = ops.concat(list(level_maps), axis=0)
    h = ops.relu(ops.conv2d(x, params[f"{p}.conv1.weight"], params[f"{p}.conv1.bias"], stride=2, padding=1))
    h = ops.conv2d(h, params[f"{p}.conv2.weight"], params[f"{p}.conv2.bias"], stride=2, padding=1)
    return ops.linear(ops.global_avg_pool(h), params[f"{p}.fc.weight"], params[f"{p}.fc.bias"])


def attention_weights(
    level_maps: Sequence[Tensor],
    params: Params,
    branch: str,
    cfg: AttentionConfig = AttentionConfig(),
) -> Tensor:
    levels = len(level_maps)
    if cfg.mode == "uniform":
        return Tensor(np.full(levels, 1.0 / levels))
    if cfg.mode == "free":
        return ops.softmax(params[f"attention.{branch}.free"], axis=0)
    logits = attention_logits(level_maps, params, branch)
    if cfg.mode == "sigmoid":
        return ops.sigmoid(logits)
    return ops.softmax(logits, axis=0)
