# steps/step06_training/imaging.py
"""
Bildhilfen für Training und Tracking (numpy, HWC uint8/float).

crop_patch: bilinearer Kontext-Ausschnitt um ein Zentrum, außerhalb des
Frames mit der mittleren Farbe aufgefüllt (Konvention der siamesischen Tracker).
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from steps.step01_numerics.tensor import Tensor
from steps.step04_anchors.boxes import Box


def context_size(w: float, h: float, context_amount: float = 0.5) -> float:
    """s_z = sqrt((w + p)(h + p)) mit p = context_amount * (w + h)."""
    p = context_amount * (w + h)
    return float(np.sqrt((w + p) * (h + p)))


def sample_bilinear(frame: np.ndarray, xs: np.ndarray, ys: np.ndarray, pad_value: np.ndarray) -> np.ndarray:
    """Bilineare Abtastung an (ys, xs) [H', W']; Punkte außerhalb -> pad_value."""
    img = frame.astype(np.float64)
    fh, fw = img.shape[:2]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]

    def tap(yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
        inside = (yy >= 0) & (yy < fh) & (xx >= 0) & (xx < fw)
        vals = img[np.clip(yy, 0, fh - 1), np.clip(xx, 0, fw - 1)]
        return np.where(inside[..., None], vals, pad_value[None, None, :])

    top = tap(y0, x0) * (1.0 - fx) + tap(y0, x0 + 1) * fx
    bottom = tap(y0 + 1, x0) * (1.0 - fx) + tap(y0 + 1, x0 + 1) * fx
    return top * (1.0 - fy) + bottom * fy


def crop_patch(
    frame: np.ndarray,
    center: Tuple[float, float],
    crop_size: float,
    out_size: int,
    pad_value: np.ndarray | None = None,
) -> np.ndarray:
    """Quadratischer Ausschnitt der Seitenlänge crop_size um center -> [out_size, out_size, 3] float."""
    if crop_size <= 0:
        raise ValueError(f"crop_size muss positiv sein: {crop_size}")
    if pad_value is None:
        pad_value = frame.reshape(-1, frame.shape[-1]).mean(axis=0)
    cx, cy = center
    step = crop_size / out_size
    offsets = (np.arange(out_size) - (out_size - 1) / 2.0) * step
    xs, ys = np.meshgrid(cx + offsets, cy + offsets)
    return sample_bilinear(frame, xs, ys, np.asarray(pad_value, dtype=np.float64))


def box_to_patch(box: Box, center: Tuple[float, float], crop_size: float, out_size: int) -> Box:
    """Frame-Koordinaten -> Patch-Koordinaten für einen Ausschnitt aus crop_patch."""
    s = out_size / crop_size
    mid = (out_size - 1) / 2.0
    return Box((box.cx - center[0]) * s + mid, (box.cy - center[1]) * s + mid, box.w * s, box.h * s)


def to_input(patch: np.ndarray) -> Tensor:
    """HWC [0, 255] -> Tensor [3, H, W] in [-0.5, 0.5]."""
    return Tensor(np.transpose(patch, (2, 0, 1)) / 255.0 - 0.5)
