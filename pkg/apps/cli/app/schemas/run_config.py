#apps/cli/app/schemas/run_config.py
"""
Laufkonfiguration als YAML. Jede Sektion gehört einem Step-Paket; unbekannte
Schlüssel werden auf jeder Ebene abgelehnt, fehlende erhalten die Defaults.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field

from steps.step02_backbone.backbone import BackboneConfig
from steps.step03_heads.attention import AttentionConfig
from steps.step03_heads.heads import HeadConfig
from steps.step03_heads.model import ModelConfig
from steps.step04_anchors.anchors import AnchorConfig
from steps.step05_losses.losses import LossConfig
from steps.step06_training.trainer import TrainConfig
from steps.step07_inference.postprocess import FusionConfig
from steps.step08_evaluation.metrics import EvalConfig


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = 0
    out_dir: Path = Path("runs/default")
    backbone: BackboneConfig = Field(default_factory=BackboneConfig)
    heads: HeadConfig = Field(default_factory=HeadConfig)
    attention: AttentionConfig = Field(default_factory=AttentionConfig)
    anchors: AnchorConfig = Field(default_factory=AnchorConfig)
    losses: LossConfig = Field(default_factory=LossConfig)
    fusion: FusionConfig = Field(default_factory=FusionConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)

    @property
    def model(self) -> ModelConfig:
        return ModelConfig(backbone=self.backbone, heads=self.heads, attention=self.attention)


def parse_run_config(text: str) -> RunConfig:
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ValueError(f"Konfiguration muss ein Mapping sein, nicht {type(data).__name__}")
    return RunConfig.model_validate(data)


def load_run_config(path: Union[str, Path, None]) -> RunConfig:
    if path is None:
        return RunConfig()
    return parse_run_config(Path(path).read_text(encoding="utf-8"))


def run_config_dict(cfg: RunConfig) -> Dict[str, Any]:
    return cfg.model_dump(mode="json")


def dump_run_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(run_config_dict(cfg), sort_keys=False, allow_unicode=True)
