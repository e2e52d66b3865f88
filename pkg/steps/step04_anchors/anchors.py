# steps/step04_anchors/anchors.py
"""
Anker-Gitter, Zuordnung zur Ground Truth und Delta-Kodierung.

Anker-Array-Layout: [k, h, w, 4] mit (cx, cy, w, h) in Suchbild-Pixeln.
Ziel-Deltas:        [4, k, h, w] (passt zum Kanal-Layout von O_reg).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .boxes import Box, iou_matrix

POSITIVE = 1
NEGATIVE = 0
IGNORE = -1

DeltaMode = Literal["standard", "center_relative"]


class AnchorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    stride: int = Field(8, gt=0)
    ratios: Tuple[float, ...] = (1.0 / 3.0, 0.5, 1.0, 2.0, 3.0)
    scales: Tuple[float, ...] = (8.0,)
    pos_iou: float = Field(0.6, ge=0.0, le=1.0)
    neg_iou: float = Field(0.3, ge=0.0, le=1.0)
    delta_mode: DeltaMode = "standard"

    @property
    def anchor_num(self) -> int:
        return len(self.ratios) * len(self.scales)


@dataclass(frozen=True)
class AnchorSet:
    boxes: np.ndarray  # [k, h, w, 4]
    stride: int

    @property
    def k(self) -> int:
        return self.boxes.shape[0]

    @property
    def map_h(self) -> int:
        return self.boxes.shape[1]

    @property
    def map_w(self) -> int:
        return self.boxes.shape[2]

    def __len__(self) -> int:
        return self.k * self.map_h * self.map_w

    def box(self, a: int, i: int, j: int) -> Box:
        cx, cy, w, h = self.boxes[a, i, j]
        return Box(float(cx), float(cy), float(w), float(h))


@dataclass(frozen=True)
class MatchLabels:
    labels: np.ndarray   # [k, h, w] int8 in {1, 0, -1}
    targets: np.ndarray  # [4, k, h, w], Null außerhalb der Positiven

    @property
    def positive(self) -> np.ndarray:
        return self.labels == POSITIVE

    @property
    def negative(self) -> np.ndarray:
        return self.labels == NEGATIVE

    @property
    def num_pos(self) -> int:
        return int(self.positive.sum())

    @classmethod
    def all_negative(cls, shape: Tuple[int, int, int]) -> "MatchLabels":
        return cls(np.full(shape, NEGATIVE, dtype=np.int8), np.zeros((4, *shape)))


def generate_anchors(map_w: int, map_h: int, cfg: AnchorConfig, search_size: int = 255) -> AnchorSet:
    """Gitter zentriert auf das Suchbild: cx(j) = (S-1)/2 + (j - (w-1)/2) * stride."""
    sizes = []
    for scale in cfg.scales:
        base = scale * cfg.stride
        for r in cfg.ratios:
            root = np.sqrt(r)
            sizes.append((base * root, base / root))
    k = len(sizes)
    centre = (search_size - 1) / 2.0
    xs = centre + (np.arange(map_w) - (map_w - 1) / 2.0) * cfg.stride
    ys = centre + (np.arange(map_h) - (map_h - 1) / 2.0) * cfg.stride
    boxes = np.empty((k, map_h, map_w, 4), dtype=np.float64)
    boxes[..., 0] = xs[None, None, :]
    boxes[..., 1] = ys[None, :, None]
    for a, (w, h) in enumerate(sizes):
        boxes[a, ..., 2] = w
        boxes[a, ..., 3] = h
    return AnchorSet(boxes, cfg.stride)


# ---------------------------------------------------------------------
# Delta-Kodierung
# ---------------------------------------------------------------------
def _center_norm(anchors: np.ndarray, mode: DeltaMode) -> Tuple[np.ndarray, np.ndarray]:
    if mode == "center_relative":
        x, y = anchors[..., 0], anchors[..., 1]
        if np.any(x == 0) or np.any(y == 0):
            raise ValueError("center_relative-Kodierung: Ankerzentrum bei 0 (Division durch Null)")
        return x, y
    return anchors[..., 2], anchors[..., 3]


def encode_deltas(anchors: np.ndarray, gt: Box, mode: DeltaMode = "standard") -> np.ndarray:
    """anchors [..., 4] -> deltas [..., 4]."""
    a = np.asarray(anchors, dtype=np.float64)
    nx, ny = _center_norm(a, mode)
    return np.stack(
        [
            (gt.cx - a[..., 0]) / nx,
            (gt.cy - a[..., 1]) / ny,
            np.log(gt.w / a[..., 2]),
            np.log(gt.h / a[..., 3]),
        ],
        axis=-1,
    )


def decode_deltas(anchors: np.ndarray, deltas: np.ndarray, mode: DeltaMode = "standard") -> np.ndarray:
    a = np.asarray(anchors, dtype=np.float64)
    d = np.asarray(deltas, dtype=np.float64)
    nx, ny = _center_norm(a, mode)
    return np.stack(
        [
            a[..., 0] + d[..., 0] * nx,
            a[..., 1] + d[..., 1] * ny,
            a[..., 2] * np.exp(d[..., 2]),
            a[..., 3] * np.exp(d[..., 3]),
        ],
        axis=-1,
    )


def encode_delta(anchor: Box, gt: Box, mode: DeltaMode = "standard") -> np.ndarray:
    return encode_deltas(anchor.as_array(), gt, mode)


def decode_delta(anchor: Box, delta: np.ndarray, mode: DeltaMode = "standard") -> Box:
    cx, cy, w, h = decode_deltas(anchor.as_array(), delta, mode)
    return Box(float(cx), float(cy), float(w), float(h))


# ---------------------------------------------------------------------
# Zuordnung
# ---------------------------------------------------------------------
def match_anchors(anchors: AnchorSet, gt: Box, cfg: AnchorConfig = AnchorConfig()) -> MatchLabels:
    overlap = iou_matrix(anchors.boxes, gt)
    labels = np.full(overlap.shape, IGNORE, dtype=np.int8)
    labels[overlap < cfg.neg_iou] = NEGATIVE
    labels[overlap > cfg.pos_iou] = POSITIVE
    targets = np.zeros((4, *overlap.shape), dtype=np.float64)
    pos = labels == POSITIVE
    if pos.any():
        deltas = encode_deltas(anchors.boxes[pos], gt, cfg.delta_mode)
        targets[:, pos] = deltas.T
    return MatchLabels(labels, targets)
