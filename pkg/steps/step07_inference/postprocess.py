# steps/step07_inference/postprocess.py
"""
Nachverarbeitung eines Vorwärtspasses beim Tracking.

    Theta = w2 * rho * (w1 * u + (1 - w1) * c) + (1 - w2) * xi

u   Objekt-Wahrscheinlichkeit aus cls            [k, h, w]
c   Zentrums-Wahrscheinlichkeit aus loc          [h, w], über k ausgedehnt
xi  Kosinusfenster                               [h, w], über k ausgedehnt
rho Größen-/Seitenverhältnis-Strafe              [k, h, w]
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from steps.step01_numerics.tensor import ShapeError, Tensor
from steps.step04_anchors.anchors import AnchorSet, DeltaMode, decode_delta
from steps.step04_anchors.boxes import Box
from steps.step06_training.imaging import box_to_patch


class FusionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    omega1: float = Field(0.7, ge=0.0, le=1.0)
    omega2: float = Field(0.6, ge=0.0, le=1.0)
    penalty_k: float = Field(0.04, ge=0.0)
    size_lr: float = Field(0.3, ge=0.0)
    # False: Lokalisierungszweig abgeschaltet, c := u
    use_loc: bool = True
    context_amount: float = Field(0.5, gt=0.0)
    min_size: float = Field(10.0, gt=0.0)


@dataclass(frozen=True)
class TrackState:
    box: Box
    score: float
    template: Tuple[Tensor, ...] = ()

    def __post_init__(self) -> None:
        if not np.isfinite(self.score):
            raise ValueError(f"TrackState: Score nicht endlich ({self.score})")


@dataclass(frozen=True)
class SearchWindow:
    """Quadratischer Suchausschnitt: Mittelpunkt und Seitenlänge im Frame, Ausgabegröße in Pixeln."""

    center: Tuple[float, float]
    crop_size: float
    out_size: int

    @property
    def scale(self) -> float:
        return self.out_size / self.crop_size

    def to_patch(self, box: Box) -> Box:
        return box_to_patch(box, self.center, self.crop_size, self.out_size)

    def to_frame(self, box: Box) -> Box:
        mid = (self.out_size - 1) / 2.0
        s = self.scale
        return Box(
            (box.cx - mid) / s + self.center[0],
            (box.cy - mid) / s + self.center[1],
            box.w / s,
            box.h / s,
        )


@dataclass(frozen=True)
class ScoreVolume:
    theta: np.ndarray  # [k, h, w]
    u: np.ndarray      # [k, h, w]
    rho: np.ndarray    # [k, h, w]


def cosine_window(w: int, h: int) -> np.ndarray:
    if w < 1 or h < 1:
        raise ValueError(f"cosine_window: w={w}, h={h}")
    return np.outer(np.hanning(h), np.hanning(w))


def _change(r: np.ndarray) -> np.ndarray:
    return np.maximum(r, 1.0 / r)


def _padded_size(w: np.ndarray, h: np.ndarray) -> np.ndarray:
    pad = (w + h) * 0.5
    return np.sqrt((w + pad) * (h + pad))


def scale_penalty(candidates: np.ndarray, prev: Box, k_pen: float) -> np.ndarray:
    """
    candidates [..., 4] (cx, cy, w, h) und prev im selben Koordinatensystem.
    rho = exp(-k_pen * (r_c * s_c - 1)).
    """
    cw, ch = candidates[..., 2], candidates[..., 3]
    s_c = _change(_padded_size(cw, ch) / _padded_size(np.float64(prev.w), np.float64(prev.h)))
    r_c = _change((prev.w / prev.h) / (cw / ch))
    return np.exp(-k_pen * (r_c * s_c - 1.0))


def fuse_scores(
    u: np.ndarray,
    c: np.ndarray,
    xi: np.ndarray,
    rho: np.ndarray,
    cfg: FusionConfig = FusionConfig(),
) -> np.ndarray:
    if u.ndim != 3 or rho.shape != u.shape:
        raise ShapeError(f"fuse_scores: u {u.shape}, rho {rho.shape}")
    hw = u.shape[1:]
    c2 = c.reshape(c.shape[-2:]) if c.ndim == 3 and c.shape[0] == 1 else c
    if c2.shape != hw or xi.shape != hw:
        raise ShapeError(f"fuse_scores: c {c.shape}, xi {xi.shape} passen nicht zu {hw}")
    center = u if not cfg.use_loc else np.broadcast_to(c2, u.shape)
    w1, w2 = cfg.omega1, cfg.omega2
    return w2 * rho * (w1 * u + (1.0 - w1) * center) + (1.0 - w2) * np.broadcast_to(xi, u.shape)


def select_peak(theta: np.ndarray) -> Tuple[int, int, int]:
    """Argmax über [k, h, w]; bei Gleichstand der kleinste flache Index."""
    a, i, j = np.unravel_index(int(np.argmax(theta)), theta.shape)
    return int(a), int(i), int(j)


def select_and_update(
    volume: ScoreVolume,
    o_reg: np.ndarray,
    anchors: AnchorSet,
    prev: TrackState,
    window: SearchWindow,
    cfg: FusionConfig = FusionConfig(),
    *,
    delta_mode: DeltaMode = "standard",
    eta_override: Optional[float] = None,
) -> TrackState:
    """
    o_reg [4, k, h, w]. Zentrum wird direkt übernommen, die Größe geglättet:
    size = (1 - eta) * size_prev + eta * size_raw, eta = size_lr * rho_sel * Theta_sel.
    """
    k, h, w = volume.theta.shape
    if o_reg.shape != (4, k, h, w) or anchors.boxes.shape[:3] != (k, h, w):
        raise ShapeError(f"select_and_update: Theta {volume.theta.shape}, O_reg {o_reg.shape}")
    a, i, j = select_peak(volume.theta)
    raw = window.to_frame(decode_delta(anchors.box(a, i, j), o_reg[:, a, i, j], delta_mode))
    if eta_override is None:
        eta = cfg.size_lr * float(volume.rho[a, i, j]) * float(volume.theta[a, i, j])
    else:
        eta = eta_override
    eta = min(max(eta, 0.0), 1.0)
    width = (1.0 - eta) * prev.box.w + eta * raw.w
    height = (1.0 - eta) * prev.box.h + eta * raw.h
    return TrackState(Box(raw.cx, raw.cy, width, height), float(volume.u[a, i, j]), prev.template)


def clip_to_frame(box: Box, frame_shape: Sequence[int], min_size: float = 10.0) -> Box:
    fh, fw = frame_shape[0], frame_shape[1]
    return Box(
        min(max(box.cx, 0.0), float(fw)),
        min(max(box.cy, 0.0), float(fh)),
        min(max(box.w, min_size), float(fw)),
        min(max(box.h, min_size), float(fh)),
    )
