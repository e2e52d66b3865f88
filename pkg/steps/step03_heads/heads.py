# steps/step03_heads/heads.py
"""
Die drei Vorhersagezweige pro Level und ihre gewichtete Fusion.

    cls:  xcorr(d, t) -> 1x1 conv C->C -> ReLU -> 1x1 conv C->2k      [2k, h, w]
    reg:  xcorr(d, t) -> 1x1 conv C->C -> ReLU -> 1x1 conv C->4k      [4k, h, w]
    loc:  resize(t) * d -> Global Context -> ASPP -> Zentrumsausschnitt [2, h, w]

Kanal-Layout der Ausgaben: cls als [2, k, h, w] (0 = Hintergrund, 1 = Objekt),
reg als [4, k, h, w] (dx, dy, dw, dh), loc als [2, h, w].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from steps.step01_numerics import ops
from steps.step01_numerics.params import ParamStore, Params
from steps.step01_numerics.tensor import ShapeError, Tensor
from steps.step02_backbone.backbone import BRANCHES, FeaturePyramid, branch_split, he_normal


class HeadConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    anchor_num: int = Field(5, gt=0)
    gc_ratio: int = Field(4, gt=0)
    aspp_rates: Tuple[int, ...] = (2, 4)
    use_global_context: bool = True


@dataclass(frozen=True)
class BranchOutputs:
    cls: Tensor
    reg: Tensor
    loc: Tensor
    gammas: Dict[str, Tensor] = field(default_factory=dict)

    def __post_init__(self) -> None:
        k2, h, w = self.cls.shape
        if self.reg.shape != (2 * k2, h, w) or self.loc.shape != (2, h, w):
            raise ShapeError(f"BranchOutputs: cls {self.cls.shape}, reg {self.reg.shape}, loc {self.loc.shape}")


# ---------------------------------------------------------------------
# Parameter
# ---------------------------------------------------------------------
def init_head_params(
    store: ParamStore, channels: int, levels: Sequence[str], cfg: HeadConfig, rng: np.random.Generator
) -> None:
    c, k = channels, cfg.anchor_num
    if c % cfg.gc_ratio != 0:
        raise ValueError(f"Kanäle C={c} nicht durch gc_ratio={cfg.gc_ratio} teilbar")
    cr = c // cfg.gc_ratio
    for lvl in levels:
        for branch, out_ch in (("cls", 2 * k), ("reg", 4 * k)):
            store.add(f"{branch}.{lvl}.conv1.weight", he_normal(rng, (c, c, 1, 1)))
            store.add(f"{branch}.{lvl}.conv1.bias", np.zeros(c))
            store.add(f"{branch}.{lvl}.conv2.weight", rng.normal(0.0, 0.01, size=(out_ch, c, 1, 1)))
            store.add(f"{branch}.{lvl}.conv2.bias", np.zeros(out_ch))
        p = f"loc.{lvl}"
        if cfg.use_global_context:
            _init_global_context(store, p, c, cr, rng)
        for rate in cfg.aspp_rates:
            store.add(f"{p}.aspp.d{rate}.weight", he_normal(rng, (c, c, 3, 3)))
        store.add(f"{p}.aspp.out.weight", rng.normal(0.0, 0.01, size=(2, c * len(cfg.aspp_rates), 1, 1)))
        store.add(f"{p}.aspp.out.bias", np.zeros(2))


def _init_global_context(store: ParamStore, p: str, c: int, cr: int, rng: np.random.Generator) -> None:
    store.add(f"{p}.gc.attn.weight", he_normal(rng, (1, c, 1, 1)))
    store.add(f"{p}.gc.attn.bias", np.zeros(1))
    store.add(f"{p}.gc.fc1.weight", he_normal(rng, (cr, c)))
    store.add(f"{p}.gc.fc1.bias", np.zeros(cr))
    store.add(f"{p}.gc.ln.weight", np.ones(cr))
    store.add(f"{p}.gc.ln.bias", np.zeros(cr))
    # Residualzweig startet bei Null: GC beginnt als Identität
    store.add(f"{p}.gc.fc2.weight", np.zeros((c, cr)))
    store.add(f"{p}.gc.fc2.bias", np.zeros(c))


# ---------------------------------------------------------------------
# Level-Köpfe
# ---------------------------------------------------------------------
def _head_stack(corr: Tensor, params: Params, prefix: str) -> Tensor:
    h = ops.relu(ops.conv2d(corr, params[f"{prefix}.conv1.weight"], params[f"{prefix}.conv1.bias"]))
    return ops.conv2d(h, params[f"{prefix}.conv2.weight"], params[f"{prefix}.conv2.bias"])


def cls_level(t_feat: Tensor, d_feat: Tensor, params: Params, level: str) -> Tensor:
    return _head_stack(ops.xcorr_depthwise(d_feat, t_feat), params, f"cls.{level}")


def reg_level(t_feat: Tensor, d_feat: Tensor, params: Params, level: str) -> Tensor:
    return _head_stack(ops.xcorr_depthwise(d_feat, t_feat), params, f"reg.{level}")


def loc_correlation(t_feat: Tensor, d_feat: Tensor) -> Tensor:
    if t_feat.shape[0] != d_feat.shape[0]:
        raise ShapeError(f"loc_correlation: Kanäle {t_feat.shape[0]} != {d_feat.shape[0]}")
    _, hd, wd = d_feat.shape
    return ops.mul(ops.resize_bilinear(t_feat, hd, wd), d_feat)


def gc_context(x: Tensor, params: Params, prefix: str) -> Tensor:
    """Softmax-gewichtetes räumliches Pooling -> Kontextvektor [C]."""
    c, h, w = x.shape
    logits = ops.conv2d(x, params[f"{prefix}.attn.weight"], params[f"{prefix}.attn.bias"])
    weights = ops.softmax(ops.reshape(logits, (h * w,)), axis=0)
    return ops.matvec(ops.reshape(x, (c, h * w)), weights)


def global_context(x: Tensor, params: Params, prefix: str) -> Tensor:
    ctx = gc_context(x, params, prefix)
    y = ops.linear(ctx, params[f"{prefix}.fc1.weight"], params[f"{prefix}.fc1.bias"])
    y = ops.relu(ops.layer_norm(y, params[f"{prefix}.ln.weight"], params[f"{prefix}.ln.bias"]))
    y = ops.linear(y, params[f"{prefix}.fc2.weight"], params[f"{prefix}.fc2.bias"])
    return ops.add_channel_vector(x, y)


def aspp(x: Tensor, params: Params, prefix: str, rates: Sequence[int] = (2, 4)) -> Tensor:
    branches = [
        ops.relu(ops.conv2d(x, params[f"{prefix}.d{r}.weight"], dilation=r, padding=r))
        for r in rates
    ]
    return ops.conv2d(ops.concat(branches, axis=0), params[f"{prefix}.out.weight"], params[f"{prefix}.out.bias"])


def loc_level(t_feat: Tensor, d_feat: Tensor, params: Params, level: str, cfg: HeadConfig) -> Tensor:
    """Lokalisierung auf Detection-Auflösung, danach auf das Korrelationsgitter h x w zugeschnitten."""
    x = loc_correlation(t_feat, d_feat)
    if cfg.use_global_context:
        x = global_context(x, params, f"loc.{level}.gc")
    out = aspp(x, params, f"loc.{level}.aspp", cfg.aspp_rates)
    margin = (t_feat.shape[1] - 1) // 2
    _, hd, wd = out.shape
    return ops.crop(out, (slice(None), slice(margin, hd - margin), slice(margin, wd - margin)))


def level_maps(pyr: FeaturePyramid, params: Params, cfg: HeadConfig) -> Dict[str, List[Tensor]]:
    maps: Dict[str, List[Tensor]] = {b: [] for b in BRANCHES}
    for (t_feat, d_feat), lvl in zip(pyr.levels, pyr.level_ids):
        t_cls, t_reg, t_loc = branch_split(t_feat, params, lvl)
        d_cls, d_reg, d_loc = branch_split(d_feat, params, lvl)
        maps["cls"].append(cls_level(t_cls, d_cls, params, lvl))
        maps["reg"].append(reg_level(t_reg, d_reg, params, lvl))
        maps["loc"].append(loc_level(t_loc, d_loc, params, lvl, cfg))
    return maps


# ---------------------------------------------------------------------
# Fusion
# ---------------------------------------------------------------------
def uniform_gamma(levels: int) -> Tensor:
    return Tensor(np.full(levels, 1.0 / levels))


def fuse_levels(maps: Sequence[Tensor], gamma: Tensor) -> Tensor:
    """O = sum_m gamma_m * F_m."""
    if gamma.shape != (len(maps),):
        raise ShapeError(f"gamma shape {gamma.shape} passt nicht zu {len(maps)} Leveln")
    out: Optional[Tensor] = None
    for m, fmap in enumerate(maps):
        term = ops.mul_scalar(fmap, ops.crop(gamma, (slice(m, m + 1),)))
        out = term if out is None else ops.add(out, term)
    assert out is not None
    return out


def fuse_branches(maps: Mapping[str, Sequence[Tensor]], gammas: Mapping[str, Tensor]) -> BranchOutputs:
    fused = {b: fuse_levels(maps[b], gammas[b]) for b in BRANCHES}
    return BranchOutputs(fused["cls"], fused["reg"], fused["loc"], dict(gammas))


def forward_heads(
    pyr: FeaturePyramid,
    params: Params,
    gammas: Optional[Mapping[str, Tensor]],
    cfg: HeadConfig,
) -> BranchOutputs:
    """gammas=None -> gleichmäßige Gewichte 1/L (Attention deaktiviert)."""
    if gammas is None:
        gammas = {b: uniform_gamma(len(pyr)) for b in BRANCHES}
    return fuse_branches(level_maps(pyr, params, cfg), gammas)
