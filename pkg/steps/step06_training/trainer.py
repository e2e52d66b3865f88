# steps/step06_training/trainer.py
"""
Dreistufiges Desk-Training.

Stufe 1: cls+reg (Backbone eingefroren), dann Backbone+cls+reg
Stufe 2: alle drei Zweige (Backbone eingefroren), dann das ganze Netz
Stufe 3: nur Attention, dann das ganze Netz inkl. Attention
In Stufe 1 und 2 ersetzt gleichmäßiges gamma = 1/L die Attention.

Eine "Epoche" ist hier eine feste Anzahl Iterationen (iterations_per_epoch).
Jeder Schritt landet als JSON-Zeile im Trainingslog.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import orjson
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from steps.step01_numerics.params import ParamStore
from steps.step01_numerics.tensor import GradTape
from steps.step03_heads.model import ModelConfig, forward_model, init_model_params
from steps.step04_anchors.anchors import AnchorConfig, AnchorSet, MatchLabels, generate_anchors, match_anchors
from steps.step05_losses.losses import LossConfig, compute_losses
from steps.step05_losses.targets import CenterTargetMap, gaussian_center_map

from .augment import AugmentFlags
from .imaging import to_input
from .optim import SGD, LrScheduleConfig, clip_grad_norm, lr_schedule
from .sampling import PairConfig, TrainPair, sample_pair
from .synthetic import SyntheticConfig, SyntheticTrackStore

log = logging.getLogger(__name__)

LOG_FILE = "train_log.jsonl"


# ---------------------------------------------------------------------
# Konfiguration
# ---------------------------------------------------------------------
class PhaseConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    epochs: int = Field(gt=0)
    trainable: Tuple[str, ...]
    attention: bool = False


class StageConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    index: int = Field(ge=1)
    phases: Tuple[PhaseConfig, ...]

    @property
    def total_epochs(self) -> int:
        return sum(p.epochs for p in self.phases)


def default_stages() -> Tuple[StageConfig, ...]:
    return (
        StageConfig(index=1, phases=(
            PhaseConfig(name="heads", epochs=10, trainable=("cls", "reg")),
            PhaseConfig(name="joint", epochs=10, trainable=("backbone", "cls", "reg")),
        )),
        StageConfig(index=2, phases=(
            PhaseConfig(name="branches", epochs=10, trainable=("cls", "reg", "loc")),
            PhaseConfig(name="all", epochs=10, trainable=("backbone", "cls", "reg", "loc")),
        )),
        StageConfig(index=3, phases=(
            PhaseConfig(name="attention", epochs=15, trainable=("attention",), attention=True),
            PhaseConfig(name="all", epochs=5, trainable=("backbone", "cls", "reg", "loc", "attention"), attention=True),
        )),
    )


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    weight_decay: float = Field(1e-4, ge=0.0)
    lr: LrScheduleConfig = Field(default_factory=LrScheduleConfig)
    iterations_per_epoch: int = Field(200, ge=1)
    batch_size: int = Field(1, ge=1)
    grad_clip: float = Field(10.0, ge=0.0)
    stages: Tuple[StageConfig, ...] = Field(default_factory=default_stages)
    # 0 = in jedem Schritt frische Paare; N > 0 = N feste Paare zyklisch
    fixed_pairs: int = Field(0, ge=0)
    pairs: PairConfig = Field(default_factory=PairConfig)
    augment: AugmentFlags = Field(default_factory=AugmentFlags.desk)
    synthetic: SyntheticConfig = Field(default_factory=SyntheticConfig)
    log_every: int = Field(50, ge=1)


@dataclass
class TrainResult:
    params: ParamStore
    checkpoints: List[Path] = field(default_factory=list)
    records: pd.DataFrame = field(default_factory=pd.DataFrame)

    def summary(self) -> pd.DataFrame:
        """Erster/letzter/mittlerer Gesamtverlust je Stufe und Phase."""
        if self.records.empty:
            return pd.DataFrame(columns=["stage", "phase", "steps", "first", "last", "mean"])
        g = self.records.groupby(["stage", "phase"], sort=False)["total"]
        return pd.DataFrame({
            "steps": g.size(), "first": g.first(), "last": g.last(), "mean": g.mean(),
        }).reset_index()


# ---------------------------------------------------------------------
# Ziele und Einzelschritt
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class TrainContext:
    model: ModelConfig
    anchor: AnchorConfig
    loss: LossConfig
    anchors: AnchorSet

    @classmethod
    def build(cls, model: ModelConfig, anchor: AnchorConfig, loss: LossConfig) -> "TrainContext":
        bb = model.backbone
        if anchor.anchor_num != model.heads.anchor_num:
            raise ValueError(f"Ankeranzahl {anchor.anchor_num} != HeadConfig.anchor_num {model.heads.anchor_num}")
        anchors = generate_anchors(bb.score_size, bb.score_size, anchor, search_size=bb.search_size)
        return cls(model, anchor, loss, anchors)


def pair_targets(pair: TrainPair, ctx: TrainContext) -> Tuple[MatchLabels, CenterTargetMap]:
    bb = ctx.model.backbone
    # Negative Paare: jede Zelle ist Hintergrund; die Zentrumskarte wird nicht verwendet
    if pair.is_positive:
        labels = match_anchors(ctx.anchors, pair.gt, ctx.anchor)
    else:
        labels = MatchLabels.all_negative((ctx.anchors.k, ctx.anchors.map_h, ctx.anchors.map_w))
    center = gaussian_center_map(
        pair.gt, bb.score_size, bb.score_size, ctx.anchor.stride,
        search_size=bb.search_size, min_overlap=ctx.loss.center_min_overlap,
    )
    return labels, center


def train_step(
    params: ParamStore,
    batch: Sequence[TrainPair],
    names: Sequence[str],
    ctx: TrainContext,
    *,
    attention_enabled: bool,
) -> Tuple[Dict[str, float], Dict[str, np.ndarray]]:
    """Vorwärts + Rückwärts über einen Batch; Gradienten gemittelt."""
    sums = {"l_cls": 0.0, "l_reg": 0.0, "l_loc": 0.0, "total": 0.0}
    grads: Dict[str, np.ndarray] = {n: np.zeros_like(params[n].data) for n in names}
    sources = [params[n] for n in names]
    for pair in batch:
        labels, center = pair_targets(pair, ctx)
        with GradTape() as tape:
            out = forward_model(
                params, to_input(pair.template_patch), to_input(pair.search_patch), ctx.model,
                attention_enabled=attention_enabled,
            )
            parts = compute_losses(out, labels, center, pair.is_positive, ctx.loss)
        for n, g in zip(names, tape.gradient(parts.graph, sources)):
            grads[n] += g
        for key, value in parts.as_record().items():
            sums[key] += value
    n_pairs = float(len(batch))
    for n in names:
        grads[n] /= n_pairs
    return {k: v / n_pairs for k, v in sums.items()}, grads


def missing_gradients(params: ParamStore, pair: TrainPair, names: Sequence[str], ctx: TrainContext, *, attention_enabled: bool) -> List[str]:
    """Trainierbare Parameter, die im Graphen eines Paares keinen Gradienten erhalten."""
    labels, center = pair_targets(pair, ctx)
    with GradTape() as tape:
        out = forward_model(
            params, to_input(pair.template_patch), to_input(pair.search_patch), ctx.model,
            attention_enabled=attention_enabled,
        )
        parts = compute_losses(out, labels, center, pair.is_positive, ctx.loss)
    grads = tape.gradient(parts.graph, [params[n] for n in names], unconnected_zero=False)
    return [n for n, g in zip(names, grads) if g is None]


# ---------------------------------------------------------------------
# Ausgabe
# ---------------------------------------------------------------------
def prepare_out_dir(out_dir: Path) -> Path:
    """Legt das Ausgabeverzeichnis an und prüft die Schreibbarkeit vor dem Training."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    marker = out_dir / ".write_check"
    marker.write_bytes(b"")
    marker.unlink()
    return out_dir


class _JsonlLog:
    def __init__(self, path: Optional[Path]) -> None:
        self._fh = path.open("wb") if path is not None else None

    def write(self, record: dict) -> None:
        if self._fh is not None:
            self._fh.write(orjson.dumps(record, option=orjson.OPT_SORT_KEYS) + b"\n")

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()


# ---------------------------------------------------------------------
# Schleife
# ---------------------------------------------------------------------
def _phase_names(params: ParamStore, stage: StageConfig, phase: PhaseConfig) -> List[str]:
    present = set(params.groups())
    groups = [g for g in phase.trainable if g in present]
    absent = sorted(set(phase.trainable) - present)
    if absent:
        log.warning("Stufe %d/%s: Gruppen ohne Parameter übersprungen: %s", stage.index, phase.name, absent)
    return params.select(groups) if groups else []


def _stage_schedule(cfg: TrainConfig, stage: StageConfig) -> LrScheduleConfig:
    total = stage.total_epochs
    return cfg.lr.model_copy(update={"total_epochs": total, "warmup_epochs": min(cfg.lr.warmup_epochs, total)})


def train_stages(
    model_cfg: ModelConfig,
    anchor_cfg: AnchorConfig,
    loss_cfg: LossConfig,
    cfg: TrainConfig,
    store: Optional[SyntheticTrackStore] = None,
    *,
    seed: int = 0,
    params: Optional[ParamStore] = None,
    out_dir: Optional[Path] = None,
    stages: Optional[Sequence[int]] = None,
) -> TrainResult:
    """
    Führt die konfigurierten Stufen aus. `stages` wählt eine Teilmenge
    (z.B. nur Stufe 1); `params` setzt ein vorhandenes Modell fort.
    """
    ctx = TrainContext.build(model_cfg, anchor_cfg, loss_cfg)
    bb = model_cfg.backbone
    if out_dir is not None:
        out_dir = prepare_out_dir(out_dir)
    if store is None:
        store = SyntheticTrackStore(cfg.synthetic)
    if params is None:
        params = init_model_params(model_cfg, seed=seed)
    rng = np.random.default_rng(seed)

    def draw() -> TrainPair:
        return sample_pair(store, rng, cfg.pairs, cfg.augment, exemplar_size=bb.exemplar_size, search_size=bb.search_size)

    fixed: List[TrainPair] = [draw() for _ in range(cfg.fixed_pairs)]
    if fixed:
        log.info("Feste Paarmenge: %d Paare (%d positiv)", len(fixed), sum(p.is_positive for p in fixed))
    cursor = 0

    def next_batch() -> List[TrainPair]:
        nonlocal cursor
        if not fixed:
            return [draw() for _ in range(cfg.batch_size)]
        batch = [fixed[(cursor + b) % len(fixed)] for b in range(cfg.batch_size)]
        cursor = (cursor + cfg.batch_size) % len(fixed)
        return batch

    result = TrainResult(params)
    records: List[dict] = []
    jsonl = _JsonlLog(out_dir / LOG_FILE if out_dir is not None else None)
    selected = [s for s in cfg.stages if stages is None or s.index in set(stages)]
    step = 0
    try:
        for stage in selected:
            schedule = _stage_schedule(cfg, stage)
            epoch_offset = 0
            for phase in stage.phases:
                names = _phase_names(params, stage, phase)
                if not names:
                    log.warning("Stufe %d/%s: nichts zu trainieren, Phase übersprungen", stage.index, phase.name)
                    epoch_offset += phase.epochs
                    continue
                params.set_trainable(names)
                opt = SGD(cfg.momentum, cfg.weight_decay)
                log.info("Stufe %d/%s: %d Tensoren trainierbar, Attention=%s",
                         stage.index, phase.name, len(names), phase.attention)
                for e in range(1, phase.epochs + 1):
                    epoch = epoch_offset + e
                    lr = lr_schedule(epoch, schedule)
                    for _ in range(cfg.iterations_per_epoch):
                        losses, grads = train_step(params, next_batch(), names, ctx, attention_enabled=phase.attention)
                        norm = clip_grad_norm(grads, cfg.grad_clip)
                        opt.step(params, grads, lr, names)
                        step += 1
                        record = {"step": step, "stage": stage.index, "phase": phase.name,
                                  "epoch": epoch, "lr": lr, "grad_norm": norm, **losses}
                        records.append(record)
                        jsonl.write(record)
                        if step % cfg.log_every == 0:
                            log.info("Schritt %d (Stufe %d/%s, Epoche %d): total=%.5f lr=%.5f",
                                     step, stage.index, phase.name, epoch, losses["total"], lr)
                epoch_offset += phase.epochs
                if out_dir is not None:
                    result.checkpoints.append(params.save(out_dir / f"stage{stage.index}_{phase.name}.smc"))
    finally:
        jsonl.close()
        params.set_trainable(params.names())
    result.records = pd.DataFrame.from_records(records)
    return result
