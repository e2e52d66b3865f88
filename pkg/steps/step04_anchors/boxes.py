# steps/step04_anchors/boxes.py
"""Achsparallele Boxen im Format (cx, cy, w, h) und Überlappungsmaße."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np


@dataclass(frozen=True)
class Box:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"Box mit nicht-positiver Größe: w={self.w}, h={self.h}")

    def to_corners(self) -> Tuple[float, float, float, float]:
        return (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "Box":
        return cls((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=np.float64)

    def translated(self, dx: float, dy: float) -> "Box":
        return Box(self.cx + dx, self.cy + dy, self.w, self.h)


def centers_to_corners(boxes: np.ndarray) -> np.ndarray:
    """[..., 4] (cx, cy, w, h) -> [..., 4] (x1, y1, x2, y2)."""
    b = np.asarray(boxes, dtype=np.float64)
    half = b[..., 2:] / 2.0
    return np.concatenate([b[..., :2] - half, b[..., :2] + half], axis=-1)


def iou_matrix(boxes: np.ndarray, ref: Box) -> np.ndarray:
    """IoU jeder Box in `boxes` ([..., 4], Zentrumsformat) mit `ref`."""
    c = centers_to_corners(boxes)
    rx1, ry1, rx2, ry2 = ref.to_corners()
    iw = np.clip(np.minimum(c[..., 2], rx2) - np.maximum(c[..., 0], rx1), 0.0, None)
    ih = np.clip(np.minimum(c[..., 3], ry2) - np.maximum(c[..., 1], ry1), 0.0, None)
    inter = iw * ih
    union = boxes[..., 2] * boxes[..., 3] + ref.w * ref.h - inter
    return inter / union


def iou(a: Box, b: Box) -> float:
    return float(iou_matrix(a.as_array(), b))
