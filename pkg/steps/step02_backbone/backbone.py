# steps/step02_backbone/backbone.py
"""
Siamesischer Feature-Extraktor im Desk-Maßstab.

Aufbau (gemeinsame Parameter für Template und Suchbereich):
    3 x [3x3 conv, stride 2, valid, ReLU]      127 -> 63 -> 31 -> 15,  255 -> 127 -> 63 -> 31
    je Level: 3x3 conv (same) + ReLU, verkettet l3 -> l4 -> l5
    je Level: 1x1 conv auf C Kanäle
    Template: Zentrum 7x7 aus 15x15

Parameternamen (stabil, Teil des Checkpoint-Formats):
    backbone.block{1,2,3}.{weight,bias}
    backbone.tap.l{3,4,5}.{weight,bias}
    backbone.reduce.l{3,4,5}.{weight,bias}
    {cls,reg,loc}.l{3,4,5}.split.weight
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from steps.step01_numerics import ops
from steps.step01_numerics.params import ParamStore, Params
from steps.step01_numerics.tensor import ShapeError, Tensor

log = logging.getLogger(__name__)

TEMPLATE_MAP = 15
TEMPLATE_CROP = 7
BRANCHES = ("cls", "reg", "loc")


def feature_size(n: int) -> int:
    """Räumliche Größe nach den drei stride-2 Blöcken."""
    for _ in range(3):
        n = (n - 3) // 2 + 1
    return n


class BackboneConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    channels: int = Field(32, gt=0)
    levels: int = Field(3, ge=1, le=3)
    exemplar_size: int = Field(127, gt=0)
    search_size: int = Field(255, gt=0)
    widths: Tuple[int, int, int] = (16, 32, 64)
    seed: int = 0

    @model_validator(mode="after")
    def _check_sizes(self) -> "BackboneConfig":
        # S == E nur für Testaufbauten (identische Patches) zugelassen
        if self.exemplar_size > self.search_size:
            raise ValueError(f"exemplar_size {self.exemplar_size} > search_size {self.search_size}")
        if feature_size(self.exemplar_size) != TEMPLATE_MAP:
            raise ValueError(
                f"exemplar_size {self.exemplar_size} ergibt {feature_size(self.exemplar_size)}x"
                f"{feature_size(self.exemplar_size)} statt {TEMPLATE_MAP}x{TEMPLATE_MAP}"
            )
        if any(w <= 0 for w in self.widths):
            raise ValueError(f"widths müssen positiv sein: {self.widths}")
        return self

    @property
    def level_ids(self) -> List[str]:
        return [f"l{3 + i}" for i in range(self.levels)]

    @property
    def detection_size(self) -> int:
        return feature_size(self.search_size)

    @property
    def score_size(self) -> int:
        return self.detection_size - TEMPLATE_CROP + 1


@dataclass(frozen=True)
class FeaturePyramid:
    levels: Tuple[Tuple[Tensor, Tensor], ...]
    level_ids: Tuple[str, ...]

    @property
    def channels(self) -> int:
        return self.levels[0][0].shape[0]

    def __len__(self) -> int:
        return len(self.levels)


def pyramid_shapes(cfg: BackboneConfig) -> List[Tuple[Tuple[int, int, int], Tuple[int, int, int]]]:
    d = cfg.detection_size
    return [((cfg.channels, TEMPLATE_CROP, TEMPLATE_CROP), (cfg.channels, d, d)) for _ in range(cfg.levels)]


# ---------------------------------------------------------------------
# Initialisierung
# ---------------------------------------------------------------------
def he_normal(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    fan_in = int(np.prod(shape[1:]))
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def init_backbone_params(store: ParamStore, cfg: BackboneConfig, rng: np.random.Generator) -> None:
    cin = 3
    for i, width in enumerate(cfg.widths, start=1):
        store.add(f"backbone.block{i}.weight", he_normal(rng, (width, cin, 3, 3)))
        store.add(f"backbone.block{i}.bias", np.zeros(width))
        cin = width
    for lvl in cfg.level_ids:
        store.add(f"backbone.tap.{lvl}.weight", he_normal(rng, (cin, cin, 3, 3)))
        store.add(f"backbone.tap.{lvl}.bias", np.zeros(cin))
        store.add(f"backbone.reduce.{lvl}.weight", he_normal(rng, (cfg.channels, cin, 1, 1)))
        store.add(f"backbone.reduce.{lvl}.bias", np.zeros(cfg.channels))
    for branch in BRANCHES:
        for lvl in cfg.level_ids:
            store.add(f"{branch}.{lvl}.split.weight", he_normal(rng, (cfg.channels, cfg.channels, 3, 3)))
    log.debug("Backbone-Parameter initialisiert (%d Level, C=%d)", cfg.levels, cfg.channels)


# ---------------------------------------------------------------------
# Vorwärtspass
# ---------------------------------------------------------------------
def _trunk(patch: Tensor, params: Params, cfg: BackboneConfig) -> List[Tensor]:
    h = patch
    for i in range(1, 4):
        h = ops.relu(ops.conv2d(h, params[f"backbone.block{i}.weight"], params[f"backbone.block{i}.bias"], stride=2))
    feats: List[Tensor] = []
    for lvl in cfg.level_ids:
        h = ops.relu(ops.conv2d(h, params[f"backbone.tap.{lvl}.weight"], params[f"backbone.tap.{lvl}.bias"], padding=1))
        feats.append(ops.conv2d(h, params[f"backbone.reduce.{lvl}.weight"], params[f"backbone.reduce.{lvl}.bias"]))
    return feats


def _expect_patch(patch: Tensor, size: int, what: str) -> None:
    if patch.shape != (3, size, size):
        raise ShapeError(f"{what}: shape {patch.shape} passt nicht zur Konfiguration (3, {size}, {size})")


def center_crop_template(feat: Tensor) -> Tensor:
    _, h, w = feat.shape
    if (h, w) != (TEMPLATE_MAP, TEMPLATE_MAP):
        raise ShapeError(f"Template-Map {h}x{w} statt {TEMPLATE_MAP}x{TEMPLATE_MAP}")
    start = (TEMPLATE_MAP - TEMPLATE_CROP) // 2
    window = slice(start, start + TEMPLATE_CROP)
    return ops.crop(feat, (slice(None), window, window))


def encode_template(template_patch: Tensor, cfg: BackboneConfig, params: Params) -> Tuple[Tensor, ...]:
    _expect_patch(template_patch, cfg.exemplar_size, "template_patch")
    return tuple(center_crop_template(f) for f in _trunk(template_patch, params, cfg))


def encode_detection(detection_patch: Tensor, cfg: BackboneConfig, params: Params) -> Tuple[Tensor, ...]:
    _expect_patch(detection_patch, cfg.search_size, "detection_patch")
    return tuple(_trunk(detection_patch, params, cfg))


def extract_pyramid(
    template_patch: Tensor,
    detection_patch: Tensor,
    cfg: BackboneConfig,
    params: Params,
) -> FeaturePyramid:
    t_feats = encode_template(template_patch, cfg, params)
    d_feats = encode_detection(detection_patch, cfg, params)
    return FeaturePyramid(tuple(zip(t_feats, d_feats)), tuple(cfg.level_ids))


def branch_split(feat: Tensor, params: Params, level: str) -> Tuple[Tensor, Tensor, Tensor]:
    """Drei unabhängige 3x3 same-Faltungen ohne Bias (cls, reg, loc)."""
    return tuple(  # type: ignore[return-value]
        ops.conv2d(feat, params[f"{branch}.{level}.split.weight"], padding=1) for branch in BRANCHES
    )
