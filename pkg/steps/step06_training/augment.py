# steps/step06_training/augment.py
"""
Datenaugmentierung: Unschärfe, Reskalierung, Rotation, Spiegelung, Graustufen.

Photometrische Schritte lassen die Box unverändert; geometrische Schritte
transformieren Bild und Box gemeinsam (Rotation: achsparallele Hülle der
gedrehten Ecken).
"""

from __future__ import annotations

from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from steps.step04_anchors.boxes import Box

from .imaging import sample_bilinear

LUMA = np.array([0.299, 0.587, 0.114])


class AugmentFlags(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    blur: float = Field(0.0, ge=0.0, le=1.0)
    rescale: float = Field(0.0, ge=0.0, le=1.0)
    rotation: float = Field(0.0, ge=0.0, le=1.0)
    flip: float = Field(0.0, ge=0.0, le=1.0)
    gray: float = Field(0.0, ge=0.0, le=1.0)
    max_scale_change: float = Field(0.1, ge=0.0, lt=1.0)
    max_angle_deg: float = Field(10.0, ge=0.0)

    @classmethod
    def off(cls) -> "AugmentFlags":
        return cls()

    @classmethod
    def desk(cls) -> "AugmentFlags":
        return cls(blur=0.2, rescale=0.3, rotation=0.2, flip=0.2, gray=0.1)


def box_blur(patch: np.ndarray) -> np.ndarray:
    p = np.pad(patch.astype(np.float64), ((1, 1), (1, 1), (0, 0)), mode="edge")
    rows = (p[:-2] + p[1:-1] + p[2:]) / 3.0
    return (rows[:, :-2] + rows[:, 1:-1] + rows[:, 2:]) / 3.0


def to_gray(patch: np.ndarray) -> np.ndarray:
    y = patch.astype(np.float64) @ LUMA
    return np.repeat(y[..., None], 3, axis=-1)


def hflip(patch: np.ndarray, box: Box) -> Tuple[np.ndarray, Box]:
    w = patch.shape[1]
    return patch[:, ::-1].copy(), Box((w - 1) - box.cx, box.cy, box.w, box.h)


def _affine(patch: np.ndarray, box: Box, scale: float, angle: float) -> Tuple[np.ndarray, Box]:
    """Skalierung/Rotation um das Patchzentrum."""
    h, w = patch.shape[:2]
    mx, my = (w - 1) / 2.0, (h - 1) / 2.0
    cos, sin = np.cos(angle), np.sin(angle)
    # Zielpixel -> Quellpixel (inverse Abbildung)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    u, v = (xx - mx) / scale, (yy - my) / scale
    src_x = mx + cos * u + sin * v
    src_y = my - sin * u + cos * v
    fill = patch.reshape(-1, patch.shape[-1]).mean(axis=0)
    out = sample_bilinear(patch, src_x, src_y, fill)

    x1, y1, x2, y2 = box.to_corners()
    corners = np.array([[x1, y1], [x2, y1], [x1, y2], [x2, y2]]) - [mx, my]
    fx = mx + scale * (cos * corners[:, 0] - sin * corners[:, 1])
    fy = my + scale * (sin * corners[:, 0] + cos * corners[:, 1])
    return out, Box.from_corners(fx.min(), fy.min(), fx.max(), fy.max())


def augment(
    patch: np.ndarray, box: Box, rng: np.random.Generator, flags: AugmentFlags
) -> Tuple[np.ndarray, Box]:
    out = patch
    # feste Reihenfolge der Zufallsziehungen -> reproduzierbar
    draws = rng.uniform(size=5)
    if draws[0] < flags.gray:
        out = to_gray(out)
    if draws[1] < flags.blur:
        out = box_blur(out)
    if draws[2] < flags.flip:
        out, box = hflip(out, box)
    scale, angle = 1.0, 0.0
    if draws[3] < flags.rescale:
        scale = 1.0 + rng.uniform(-flags.max_scale_change, flags.max_scale_change)
    if draws[4] < flags.rotation:
        angle = np.deg2rad(rng.uniform(-flags.max_angle_deg, flags.max_angle_deg))
    if scale != 1.0 or angle != 0.0:
        out, box = _affine(out, box, scale, angle)
    return out, box
