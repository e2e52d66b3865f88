# steps/step03_heads/model.py
"""Vollständiges Netz: Backbone -> Split -> Köpfe -> Attention -> Fusion."""

from __future__ import annotations

import logging
from typing import Dict, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from steps.step01_numerics.params import ParamStore, Params
from steps.step01_numerics.tensor import Tensor
from steps.step02_backbone.backbone import (
    BRANCHES,
    BackboneConfig,
    FeaturePyramid,
    encode_detection,
    encode_template,
    init_backbone_params,
)

from .attention import AttentionConfig, attention_weights, init_attention_params
from .heads import BranchOutputs, HeadConfig, fuse_branches, init_head_params, level_maps, uniform_gamma

log = logging.getLogger(__name__)


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    backbone: BackboneConfig = Field(default_factory=BackboneConfig)
    heads: HeadConfig = Field(default_factory=HeadConfig)
    attention: AttentionConfig = Field(default_factory=AttentionConfig)


def init_model_params(cfg: ModelConfig, seed: int | None = None) -> ParamStore:
    rng = np.random.default_rng(cfg.backbone.seed if seed is None else seed)
    store = ParamStore()
    init_backbone_params(store, cfg.backbone, rng)
    init_head_params(store, cfg.backbone.channels, cfg.backbone.level_ids, cfg.heads, rng)
    init_attention_params(store, cfg.backbone.levels, cfg.heads.anchor_num, cfg.attention, rng)
    log.info("Modell initialisiert: %d Tensoren, %d Werte", len(store), store.num_values())
    return store


def template_features(params: Params, template_patch: Tensor, cfg: ModelConfig) -> Sequence[Tensor]:
    """Einmalig pro Sequenz (erstes Frame)."""
    return encode_template(template_patch, cfg.backbone, params)


def _gammas(maps: Dict[str, list], params: Params, cfg: ModelConfig, attention_enabled: bool) -> Dict[str, Tensor]:
    if not attention_enabled or cfg.attention.mode == "uniform":
        return {b: uniform_gamma(cfg.backbone.levels) for b in BRANCHES}
    return {b: attention_weights(maps[b], params, b, cfg.attention) for b in BRANCHES}


def forward_search(
    params: Params,
    template_feats: Sequence[Tensor],
    search_patch: Tensor,
    cfg: ModelConfig,
    *,
    attention_enabled: bool = True,
) -> BranchOutputs:
    d_feats = encode_detection(search_patch, cfg.backbone, params)
    pyr = FeaturePyramid(tuple(zip(template_feats, d_feats)), tuple(cfg.backbone.level_ids))
    maps = level_maps(pyr, params, cfg.heads)
    return fuse_branches(maps, _gammas(maps, params, cfg, attention_enabled))


def forward_model(
    params: Params,
    template_patch: Tensor,
    search_patch: Tensor,
    cfg: ModelConfig,
    *,
    attention_enabled: bool = True,
) -> BranchOutputs:
    t_feats = template_features(params, template_patch, cfg)
    return forward_search(params, t_feats, search_patch, cfg, attention_enabled=attention_enabled)
