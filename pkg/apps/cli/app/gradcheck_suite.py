#apps/cli/app/gradcheck_suite.py
"""
Finite-Differenzen-Suite über alle differenzierbaren Ops und die
zusammengesetzten Köpfe/Verluste. Jeder Fall baut aus einem Seed
eine skalare Closure samt Eingaben; Reduktion über feste Zufallsgewichte,
damit sich Gradienten nicht gegenseitig aufheben.
"""

from __future__ import annotations

import fnmatch
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from steps.step01_numerics import ops
from steps.step01_numerics.gradcheck import grad_check
from steps.step01_numerics.tensor import Tensor
from steps.step02_backbone.backbone import BRANCHES, FeaturePyramid
from steps.step03_heads.attention import AttentionConfig, attention_weights, branch_channels
from steps.step03_heads.heads import (
    BranchOutputs,
    HeadConfig,
    aspp,
    cls_level,
    forward_heads,
    fuse_branches,
    global_context,
    loc_level,
    reg_level,
)
from steps.step04_anchors.anchors import IGNORE, NEGATIVE, POSITIVE, MatchLabels
from steps.step05_losses.losses import loss_cls, loss_loc, loss_reg
from steps.step05_losses.targets import CenterTargetMap

log = logging.getLogger(__name__)

Closure = Callable[..., Tensor]
Builder = Callable[[np.random.Generator], Tuple[Closure, List[np.ndarray]]]


@dataclass(frozen=True)
class GradCase:
    name: str
    build: Builder


GRADCHECK_CASES: Dict[str, GradCase] = {}


def register(name: str) -> Callable[[Builder], Builder]:
    def deco(fn: Builder) -> Builder:
        GRADCHECK_CASES[name] = GradCase(name, fn)
        return fn
    return deco


def _reduce(out: Tensor, rng_weights: np.ndarray) -> Tensor:
    return ops.dot_const(out, rng_weights)


def _away_from_zero(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    """Werte mit |x| >= 0.1 (keine Knickstellen von relu/abs im Differenzenfenster)."""
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(0.1, 1.0, size=shape)


def _unary(op: Callable[[Tensor], Tensor], shape: Tuple[int, ...], sample=None) -> Builder:
    def build(rng: np.random.Generator):
        x = sample(rng, shape) if sample is not None else rng.normal(size=shape)
        out_shape = op(Tensor(x)).shape
        w = rng.normal(size=out_shape)
        return (lambda a: _reduce(op(a), w)), [x]
    return build


def _named(names: Sequence[str], fn: Callable[[Mapping[str, Tensor]], Tensor]) -> Closure:
    """Closure über benannte Parameter in fester Reihenfolge."""
    def closure(*leaves: Tensor) -> Tensor:
        return fn(dict(zip(names, leaves)))
    return closure


# ---------------------------------------------------------------------
# Einzel-Ops
# ---------------------------------------------------------------------
for _name, _op, _shape, _sample in (
    ("relu", ops.relu, (3, 4), _away_from_zero),
    ("sigmoid", ops.sigmoid, (3, 4), None),
    ("abs", ops.abs_, (3, 4), _away_from_zero),
    ("log_clipped", ops.log_clipped, (3, 4), lambda r, s: r.uniform(0.2, 2.0, size=s)),
    ("softmax", lambda t: ops.softmax(t, axis=0), (3, 2, 2), None),
    ("resize_bilinear", lambda t: ops.resize_bilinear(t, 5, 7), (2, 3, 4), None),
    ("crop", lambda t: ops.crop(t, (slice(None), slice(1, 3), slice(0, 2))), (2, 4, 4), None),
    ("reshape", lambda t: ops.reshape(t, (4, 6)), (2, 3, 4), None),
    ("global_avg_pool", ops.global_avg_pool, (3, 4, 5), None),
    ("sum", ops.sum_, (3, 4), None),
    ("mean", ops.mean, (3, 4), None),
    ("scale", lambda t: ops.scale(t, -1.7), (3, 4), None),
):
    GRADCHECK_CASES[_name] = GradCase(_name, _unary(_op, _shape, _sample))


@register("dot_const")
def _dot_const(rng):
    w = rng.normal(size=(3, 4))
    return (lambda a: ops.dot_const(a, w)), [rng.normal(size=(3, 4))]


def _binary(op: Callable[[Tensor, Tensor], Tensor], shape_a, shape_b) -> Builder:
    def build(rng: np.random.Generator):
        a, b = rng.normal(size=shape_a), rng.normal(size=shape_b)
        w = rng.normal(size=op(Tensor(a), Tensor(b)).shape)
        return (lambda x, y: _reduce(op(x, y), w)), [a, b]
    return build


for _name, _op, _sa, _sb in (
    ("add", ops.add, (2, 3), (2, 3)),
    ("sub", ops.sub, (2, 3), (2, 3)),
    ("mul", ops.mul, (2, 3), (2, 3)),
    ("mul_scalar", ops.mul_scalar, (2, 3, 3), (1,)),
    ("add_channel_vector", ops.add_channel_vector, (3, 2, 2), (3,)),
    ("matvec", ops.matvec, (3, 5), (5,)),
    ("linear", lambda v, m: ops.linear(v, m), (4,), (3, 4)),
    ("concat", lambda a, b: ops.concat([a, b], axis=0), (2, 3, 3), (1, 3, 3)),
    ("xcorr_depthwise", ops.xcorr_depthwise, (3, 6, 6), (3, 3, 3)),
):
    GRADCHECK_CASES[_name] = GradCase(_name, _binary(_op, _sa, _sb))


@register("conv2d")
def _conv2d(rng):
    x, k, b = rng.normal(size=(2, 6, 6)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
    w = rng.normal(size=(3, 3, 3))
    return (lambda x_, k_, b_: _reduce(ops.conv2d(x_, k_, b_, stride=2, padding=1), w)), [x, k, b]


@register("conv2d_dilated")
def _conv2d_dilated(rng):
    x, k = rng.normal(size=(2, 7, 7)), rng.normal(size=(2, 2, 3, 3))
    w = rng.normal(size=(2, 7, 7))
    return (lambda x_, k_: _reduce(ops.conv2d(x_, k_, dilation=2, padding=2), w)), [x, k]


@register("layer_norm")
def _layer_norm(rng):
    v, g, b = rng.normal(size=5), rng.normal(size=5), rng.normal(size=5)
    w = rng.normal(size=5)
    return (lambda v_, g_, b_: _reduce(ops.layer_norm(v_, g_, b_), w)), [v, g, b]


# ---------------------------------------------------------------------
# Zusammengesetzte Köpfe
# ---------------------------------------------------------------------
_C, _K, _L = 4, 1, 3
_HEADS = HeadConfig(anchor_num=_K, gc_ratio=2, aspp_rates=(2, 4))


def _head_params(rng: np.random.Generator, prefix: str, out_ch: int) -> Dict[str, np.ndarray]:
    return {
        f"{prefix}.conv1.weight": rng.normal(0, 0.5, size=(_C, _C, 1, 1)),
        f"{prefix}.conv1.bias": rng.normal(0, 0.1, size=_C),
        f"{prefix}.conv2.weight": rng.normal(0, 0.5, size=(out_ch, _C, 1, 1)),
        f"{prefix}.conv2.bias": rng.normal(0, 0.1, size=out_ch),
    }


def _gc_params(rng: np.random.Generator, prefix: str) -> Dict[str, np.ndarray]:
    cr = _C // _HEADS.gc_ratio
    return {
        f"{prefix}.attn.weight": rng.normal(size=(1, _C, 1, 1)),
        f"{prefix}.attn.bias": rng.normal(size=1),
        f"{prefix}.fc1.weight": rng.normal(size=(cr, _C)),
        f"{prefix}.fc1.bias": rng.normal(size=cr),
        f"{prefix}.ln.weight": rng.normal(size=cr),
        f"{prefix}.ln.bias": rng.normal(size=cr),
        f"{prefix}.fc2.weight": rng.normal(size=(_C, cr)),
        f"{prefix}.fc2.bias": rng.normal(size=_C),
    }


def _aspp_params(rng: np.random.Generator, prefix: str) -> Dict[str, np.ndarray]:
    p = {f"{prefix}.d{r}.weight": rng.normal(0, 0.3, size=(_C, _C, 3, 3)) for r in _HEADS.aspp_rates}
    p[f"{prefix}.out.weight"] = rng.normal(0, 0.3, size=(2, _C * len(_HEADS.aspp_rates), 1, 1))
    p[f"{prefix}.out.bias"] = rng.normal(size=2)
    return p


def _features(rng: np.random.Generator) -> Dict[str, np.ndarray]:
    return {"t": rng.normal(size=(_C, 3, 3)), "d": rng.normal(size=(_C, 7, 7))}


def _composed(rng: np.random.Generator, arrays: Dict[str, np.ndarray], fn: Callable[[Mapping[str, Tensor]], Tensor]):
    names = list(arrays)
    out_shape = fn({n: Tensor(a) for n, a in arrays.items()}).shape
    w = rng.normal(size=out_shape)
    return _named(names, lambda p: _reduce(fn(p), w)), [arrays[n] for n in names]


@register("cls_level")
def _cls_level(rng):
    arrays = {**_features(rng), **_head_params(rng, "cls.l3", 2 * _K)}
    return _composed(rng, arrays, lambda p: cls_level(p["t"], p["d"], p, "l3"))


@register("reg_level")
def _reg_level(rng):
    arrays = {**_features(rng), **_head_params(rng, "reg.l3", 4 * _K)}
    return _composed(rng, arrays, lambda p: reg_level(p["t"], p["d"], p, "l3"))


@register("global_context")
def _global_context(rng):
    arrays = {"x": rng.normal(size=(_C, 4, 4)), **_gc_params(rng, "gc")}
    return _composed(rng, arrays, lambda p: global_context(p["x"], p, "gc"))


@register("aspp")
def _aspp(rng):
    arrays = {"x": rng.normal(size=(_C, 5, 5)), **_aspp_params(rng, "aspp")}
    return _composed(rng, arrays, lambda p: aspp(p["x"], p, "aspp", _HEADS.aspp_rates))


@register("loc_pipeline")
def _loc_pipeline(rng):
    arrays = {**_features(rng), **_gc_params(rng, "loc.l3.gc"), **_aspp_params(rng, "loc.l3.aspp")}
    return _composed(rng, arrays, lambda p: loc_level(p["t"], p["d"], p, "l3", _HEADS))


@register("attention_weights")
def _attention_weights(rng):
    cfg = AttentionConfig(hidden=3)
    ch = 2 * _K
    arrays = {f"m{i}": rng.normal(size=(ch, 5, 5)) for i in range(_L)}
    arrays.update({
        "attention.cls.conv1.weight": rng.normal(0, 0.5, size=(cfg.hidden, _L * ch, 3, 3)),
        "attention.cls.conv1.bias": rng.normal(0, 0.1, size=cfg.hidden),
        "attention.cls.conv2.weight": rng.normal(0, 0.5, size=(cfg.hidden, cfg.hidden, 3, 3)),
        "attention.cls.conv2.bias": rng.normal(0, 0.1, size=cfg.hidden),
        "attention.cls.fc.weight": rng.normal(size=(_L, cfg.hidden)),
        "attention.cls.fc.bias": rng.normal(size=_L),
    })
    return _composed(rng, arrays, lambda p: attention_weights([p[f"m{i}"] for i in range(_L)], p, "cls", cfg))


def _attention_params(rng: np.random.Generator, branch: str, ch: int, cfg: AttentionConfig) -> Dict[str, np.ndarray]:
    p = f"attention.{branch}"
    return {
        f"{p}.conv1.weight": rng.normal(0, 0.5, size=(cfg.hidden, _L * ch, 3, 3)),
        f"{p}.conv1.bias": rng.normal(0, 0.1, size=cfg.hidden),
        f"{p}.conv2.weight": rng.normal(0, 0.5, size=(cfg.hidden, cfg.hidden, 3, 3)),
        f"{p}.conv2.bias": rng.normal(0, 0.1, size=cfg.hidden),
        f"{p}.fc.weight": rng.normal(size=(_L, cfg.hidden)),
        f"{p}.fc.bias": rng.normal(size=_L),
    }


def _with_constants(
    rng: np.random.Generator,
    leaves: Dict[str, np.ndarray],
    constants: Dict[str, np.ndarray],
    fn: Callable[[Mapping[str, Tensor]], Tensor],
):
    """Wie _composed, variiert werden aber nur `leaves`; `constants` gehen als feste Tensoren ein."""
    fixed = {n: Tensor(a) for n, a in constants.items()}
    return _composed(rng, leaves, lambda p: fn({**fixed, **p}))


def _stacked(out: BranchOutputs) -> Tensor:
    return ops.concat([out.cls, out.reg, out.loc], axis=0)


@register("forward_heads")
def _forward_heads(rng):
    """Zwei Level: Zweig-Split, alle drei Köpfe und Fusion mit 1/L."""
    level_ids = ("l3", "l4")
    leaves: Dict[str, np.ndarray] = {}
    constants: Dict[str, np.ndarray] = {}
    for lvl in level_ids:
        feats = _features(rng)
        leaves[f"t.{lvl}"], leaves[f"d.{lvl}"] = feats["t"], feats["d"]
        for branch in BRANCHES:
            constants[f"{branch}.{lvl}.split.weight"] = rng.normal(0, 0.3, size=(_C, _C, 3, 3))
        constants.update(_head_params(rng, f"cls.{lvl}", 2 * _K))
        constants.update(_head_params(rng, f"reg.{lvl}", 4 * _K))
        constants.update(_gc_params(rng, f"loc.{lvl}.gc"))
        constants.update(_aspp_params(rng, f"loc.{lvl}.aspp"))

    def fn(p: Mapping[str, Tensor]) -> Tensor:
        pyr = FeaturePyramid(tuple((p[f"t.{lvl}"], p[f"d.{lvl}"]) for lvl in level_ids), level_ids)
        return _stacked(forward_heads(pyr, p, None, _HEADS))

    return _with_constants(rng, leaves, constants, fn)


@register("attention_fusion")
def _attention_fusion(rng):
    """Attention-Gewichte aller drei Zweige und die damit gewichtete Level-Fusion."""
    cfg = AttentionConfig(hidden=3)
    leaves: Dict[str, np.ndarray] = {}
    constants: Dict[str, np.ndarray] = {}
    for branch, ch in branch_channels(_K).items():
        for i in range(_L):
            leaves[f"{branch}.m{i}"] = rng.normal(size=(ch, 4, 4))
        for name, arr in _attention_params(rng, branch, ch, cfg).items():
            # Faltungsgewichte fest, FC-Schicht variiert
            target = leaves if ".fc." in name else constants
            target[name] = arr

    def fn(p: Mapping[str, Tensor]) -> Tensor:
        maps = {b: [p[f"{b}.m{i}"] for i in range(_L)] for b in BRANCHES}
        gammas = {b: attention_weights(maps[b], p, b, cfg) for b in BRANCHES}
        return _stacked(fuse_branches(maps, gammas))

    return _with_constants(rng, leaves, constants, fn)


# ---------------------------------------------------------------------
# Verluste
# ---------------------------------------------------------------------
def _random_labels(rng: np.random.Generator, k: int, h: int, w: int) -> MatchLabels:
    labels = rng.choice(np.array([POSITIVE, NEGATIVE, IGNORE], dtype=np.int8), size=(k, h, w))
    labels[0, 0, 0] = POSITIVE
    targets = np.where(labels == POSITIVE, 1.0, 0.0)[None] * rng.normal(size=(4, k, h, w))
    return MatchLabels(labels, targets)


@register("loss_cls")
def _loss_cls(rng):
    labels = _random_labels(rng, 2, 3, 3)
    return (lambda o: loss_cls(o, labels)), [rng.normal(size=(4, 3, 3))]


@register("loss_reg")
def _loss_reg(rng):
    labels = _random_labels(rng, 2, 3, 3)
    # Abstand zu den Zielen, damit |x| nicht am Knick ausgewertet wird
    pred = labels.targets.reshape(8, 3, 3) + _away_from_zero(rng, (8, 3, 3))
    return (lambda o: loss_reg(o, labels)), [pred]


@register("loss_loc")
def _loss_loc(rng):
    target = CenterTargetMap(rng.uniform(0.0, 1.0, size=(3, 3)), (1, 1), 1.0)
    return (lambda o: loss_loc(o, target)), [rng.normal(size=(2, 3, 3))]


# ---------------------------------------------------------------------
# Ausführung
# ---------------------------------------------------------------------
def select_cases(pattern: str = "*", cases: Optional[Mapping[str, GradCase]] = None) -> List[GradCase]:
    pool = GRADCHECK_CASES if cases is None else cases
    chosen = [pool[n] for n in sorted(pool) if fnmatch.fnmatchcase(n, pattern)]
    if not chosen:
        raise ValueError(f"Filter {pattern!r} passt auf keine Op; verfügbar: {', '.join(sorted(pool))}")
    return chosen


def run_suite(
    pattern: str = "*",
    *,
    seeds: int = 10,
    tol: float = 1e-4,
    base_seed: int = 0,
    cases: Optional[Mapping[str, GradCase]] = None,
) -> pd.DataFrame:
    """Eine Zeile je Op: max. relativer Fehler über alle Seeds, bestanden ja/nein."""
    rows = []
    for case in select_cases(pattern, cases):
        worst = 0.0
        for s in range(seeds):
            closure, inputs = case.build(np.random.default_rng(base_seed + s))
            worst = max(worst, grad_check(closure, inputs).max_rel_error)
        rows.append({"op": case.name, "seeds": seeds, "max_rel_error": worst, "passed": bool(worst < tol)})
        log.debug("gradcheck %s: %.3e", case.name, worst)
    return pd.DataFrame.from_records(rows, columns=["op", "seeds", "max_rel_error", "passed"])
