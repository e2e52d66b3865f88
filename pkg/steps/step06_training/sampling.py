# steps/step06_training/sampling.py
"""
Trainingspaare aus dem synthetischen Spurspeicher.

Positiv (Anteil pos_fraction): Template und Suchbild aus derselben Spur,
Frameabstand < max_interval; mit static_pair_prob dasselbe Frame.
Negativ: Suchbild aus einer anderen Spur (enthält das Template-Objekt nicht).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from steps.step04_anchors.boxes import Box

from .augment import AugmentFlags, augment
from .imaging import box_to_patch, context_size, crop_patch
from .synthetic import SyntheticTrackStore


class PairConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    pos_fraction: float = Field(0.8, ge=0.0, le=1.0)
    max_interval: int = Field(100, ge=1)
    static_pair_prob: float = Field(0.1, ge=0.0, le=1.0)
    search_shift: float = Field(24.0, ge=0.0)
    scale_jitter: float = Field(0.05, ge=0.0, lt=1.0)
    context_amount: float = Field(0.5, gt=0.0)


@dataclass(frozen=True)
class PairSpec:
    """Ziehung ohne Rendering (billig, für Statistik und Reproduzierbarkeit)."""

    template_track: int
    template_frame: int
    search_track: int
    search_frame: int
    is_positive: bool
    shift: tuple[float, float]
    scale: float


@dataclass(frozen=True)
class TrainPair:
    template_patch: np.ndarray  # [E, E, 3] float, 0..255
    search_patch: np.ndarray    # [S, S, 3]
    gt: Box                     # Suchbild-Koordinaten
    is_positive: bool
    spec: PairSpec


def draw_pair_spec(store: SyntheticTrackStore, rng: np.random.Generator, cfg: PairConfig) -> PairSpec:
    if len(store) == 0:
        raise ValueError("Leerer Spurspeicher")
    n_frames = store.frames_per_track
    is_positive = bool(rng.uniform() < cfg.pos_fraction) or len(store) < 2
    track = int(rng.integers(len(store)))
    frame = int(rng.integers(n_frames))
    if is_positive:
        other_track = track
        if rng.uniform() < cfg.static_pair_prob:
            other_frame = frame
        else:
            lo = max(0, frame - cfg.max_interval + 1)
            hi = min(n_frames - 1, frame + cfg.max_interval - 1)
            other_frame = int(rng.integers(lo, hi + 1))
    else:
        other_track = int((track + rng.integers(1, len(store))) % len(store))
        other_frame = int(rng.integers(n_frames))
    shift = tuple(float(v) for v in rng.uniform(-cfg.search_shift, cfg.search_shift, size=2))
    scale = float(1.0 + rng.uniform(-cfg.scale_jitter, cfg.scale_jitter))
    return PairSpec(track, frame, other_track, other_frame, is_positive, shift, scale)  # type: ignore[arg-type]


def render_pair(
    store: SyntheticTrackStore,
    spec: PairSpec,
    rng: np.random.Generator,
    cfg: PairConfig,
    flags: AugmentFlags,
    *,
    exemplar_size: int = 127,
    search_size: int = 255,
) -> TrainPair:
    t_box = store.box(spec.template_track, spec.template_frame)
    s_z = context_size(t_box.w, t_box.h, cfg.context_amount)
    template = crop_patch(store.frame(spec.template_track, spec.template_frame), (t_box.cx, t_box.cy), s_z, exemplar_size)

    s_box = store.box(spec.search_track, spec.search_frame)
    s_zs = context_size(s_box.w, s_box.h, cfg.context_amount)
    s_x = s_zs * search_size / exemplar_size * spec.scale
    # Verschiebung in Suchbild-Pixeln -> Frame-Pixel
    px = s_x / search_size
    center = (s_box.cx - spec.shift[0] * px, s_box.cy - spec.shift[1] * px)
    search = crop_patch(store.frame(spec.search_track, spec.search_frame), center, s_x, search_size)
    gt = box_to_patch(s_box, center, s_x, search_size)

    template, _ = augment(template, Box(exemplar_size / 2, exemplar_size / 2, 1.0, 1.0), rng, flags)
    search, gt = augment(search, gt, rng, flags)
    return TrainPair(template, search, gt, spec.is_positive, spec)


def sample_pair(
    store: SyntheticTrackStore,
    rng: np.random.Generator,
    cfg: PairConfig = PairConfig(),
    flags: AugmentFlags = AugmentFlags(),
    *,
    exemplar_size: int = 127,
    search_size: int = 255,
) -> TrainPair:
    spec = draw_pair_spec(store, rng, cfg)
    return render_pair(store, spec, rng, cfg, flags, exemplar_size=exemplar_size, search_size=search_size)
