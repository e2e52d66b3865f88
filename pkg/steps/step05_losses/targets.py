# steps/step05_losses/targets.py
"""Gauß-Zentrumskarte mit objektgrößenabhängigem Sigma."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from steps.step04_anchors.boxes import Box


@dataclass(frozen=True)
class CenterTargetMap:
    values: np.ndarray  # [h, w] in [0, 1]
    center: Tuple[int, int]  # (i0, j0) auf dem Gitter
    sigma: float

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]


def gaussian_radius(height: float, width: float, min_overlap: float = 0.7) -> float:
    """
    Kleinster Versatz, bei dem die verschobene Box noch IoU >= min_overlap hat
    (drei Fälle der Eckpunkt-Verschiebung, jeweils eine quadratische Gleichung).
    """
    a1 = 1.0
    b1 = height + width
    c1 = width * height * (1.0 - min_overlap) / (1.0 + min_overlap)
    r1 = (b1 - math.sqrt(b1 * b1 - 4.0 * a1 * c1)) / (2.0 * a1)

    a2 = 4.0
    b2 = 2.0 * (height + width)
    c2 = (1.0 - min_overlap) * width * height
    r2 = (b2 - math.sqrt(b2 * b2 - 4.0 * a2 * c2)) / (2.0 * a2)

    a3 = 4.0 * min_overlap
    b3 = -2.0 * min_overlap * (height + width)
    c3 = (min_overlap - 1.0) * width * height
    r3 = (b3 + math.sqrt(b3 * b3 - 4.0 * a3 * c3)) / (2.0 * a3)
    return min(r1, r2, r3)


def lattice_index(coord: float, map_size: int, stride: int, search_size: int) -> int:
    """Pixelkoordinate im Suchbild -> nächste Gitterzelle (gleiches Gitter wie die Anker)."""
    origin = (search_size - 1) / 2.0 - (map_size - 1) / 2.0 * stride
    return int(math.floor((coord - origin) / stride + 0.5))


def gaussian_center_map(
    gt: Box,
    map_w: int,
    map_h: int,
    stride: int,
    *,
    search_size: int = 255,
    min_overlap: float = 0.7,
) -> CenterTargetMap:
    if not (gt.w > 0 and gt.h > 0):
        raise ValueError(f"Degenerierte Ground Truth: w={gt.w}, h={gt.h}")
    radius = max(gaussian_radius(gt.h / stride, gt.w / stride, min_overlap), 1.0)
    sigma = radius / 3.0
    i0 = lattice_index(gt.cy, map_h, stride, search_size)
    j0 = lattice_index(gt.cx, map_w, stride, search_size)
    ii = np.arange(map_h, dtype=np.float64)[:, None]
    jj = np.arange(map_w, dtype=np.float64)[None, :]
    values = np.exp(-((ii - i0) ** 2 + (jj - j0) ** 2) / (2.0 * sigma * sigma))
    return CenterTargetMap(values, (i0, j0), sigma)
