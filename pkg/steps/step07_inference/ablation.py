# steps/step07_inference/ablation.py
"""
Vergleich vollständiges Modell gegen abgeschalteten Lokalisierungszweig
auf schnell bewegten synthetischen Sequenzen (mittlere IoU je Variante).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import pandas as pd

from steps.step01_numerics.params import Params
from steps.step03_heads.model import ModelConfig
from steps.step04_anchors.anchors import AnchorConfig
from steps.step04_anchors.boxes import Box, iou
from steps.step06_training.synthetic import constant_velocity_sequence

from .postprocess import FusionConfig
from .tracker import track_sequence

log = logging.getLogger(__name__)

LabeledSequence = Tuple[List[np.ndarray], List[Box]]


@dataclass(frozen=True)
class AblationVariant:
    name: str
    params: Params
    fusion: FusionConfig


def fast_motion_suite(n_sequences: int = 4, n_frames: int = 30, *, seed: int = 2024, frame_size: int = 320) -> List[LabeledSequence]:
    return [
        constant_velocity_sequence(n_frames, seed=seed + s, frame_size=frame_size, fast_motion=True)
        for s in range(n_sequences)
    ]


def mean_iou(states_boxes: Sequence[Box], gt: Sequence[Box]) -> float:
    return float(np.mean([iou(b, g) for b, g in zip(states_boxes, gt)]))


def run_ablation(
    variants: Sequence[AblationVariant],
    suite: Sequence[LabeledSequence],
    model_cfg: ModelConfig = ModelConfig(),
    anchor_cfg: AnchorConfig = AnchorConfig(),
) -> pd.DataFrame:
    """Eine Zeile je (Variante, Sequenz) mit der mittleren IoU."""
    rows = []
    for variant in variants:
        for idx, (frames, gt) in enumerate(suite):
            states = track_sequence(frames, gt[0], variant.params, model_cfg, anchor_cfg, variant.fusion)
            rows.append({"variant": variant.name, "sequence": idx, "mean_iou": mean_iou([s.box for s in states], gt)})
    df = pd.DataFrame.from_records(rows, columns=["variant", "sequence", "mean_iou"])
    if not df.empty:
        for name, value in df.groupby("variant", sort=False)["mean_iou"].mean().items():
            log.info("Ablation %s: mittlere IoU %.4f", name, value)
    return df


def summarize_ablation(df: pd.DataFrame) -> pd.Series:
    return df.groupby("variant", sort=False)["mean_iou"].mean()
