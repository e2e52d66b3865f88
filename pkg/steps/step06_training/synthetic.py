# steps/step06_training/synthetic.py
"""
Prozedural erzeugte Trainings-/Testsequenzen.

Jede Spur: texturiertes Rechteck oder Ellipse auf glattem Rauschhintergrund,
konstante Geschwindigkeit mit Reflexion am Bildrand, periodische Größendrift,
optional ein grauer Verdecker. Frames werden bei Bedarf aus dem Seed gerendert.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from steps.step04_anchors.boxes import Box

log = logging.getLogger(__name__)


class SyntheticConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    num_tracks: int = Field(8, ge=1)
    frames_per_track: int = Field(120, ge=1)
    frame_size: int = Field(320, ge=64)
    object_size: Tuple[float, float] = (40.0, 80.0)
    speed: Tuple[float, float] = (0.5, 3.0)
    scale_drift: float = Field(0.1, ge=0.0, lt=1.0)
    occluder_prob: float = Field(0.2, ge=0.0, le=1.0)
    fast_motion: bool = False
    seed: int = 0

    @model_validator(mode="after")
    def _check_ranges(self) -> "SyntheticConfig":
        lo, hi = self.object_size
        if not 0 < lo <= hi < self.frame_size / 2:
            raise ValueError(f"object_size {self.object_size} unpassend für frame_size {self.frame_size}")
        if not 0 <= self.speed[0] <= self.speed[1]:
            raise ValueError(f"speed {self.speed} ungültig")
        return self


@dataclass(frozen=True)
class TrackSpec:
    x0: float
    y0: float
    vx: float
    vy: float
    w0: float
    h0: float
    drift_period: float
    shape: str
    colors: np.ndarray      # [2, 3]
    stripe: float
    background: np.ndarray  # [n, n, 3] grob, wird hochskaliert
    occluder: Tuple[float, float, float, float] | None  # (x, y, w, h) statisch


def _reflect(p: np.ndarray | float, lo: float, hi: float) -> float:
    span = hi - lo
    q = np.mod(np.asarray(p) - lo, 2.0 * span)
    return float(lo + np.where(q > span, 2.0 * span - q, q))


def _upsample(coarse: np.ndarray, size: int) -> np.ndarray:
    n = coarse.shape[0]
    src = np.arange(size) * (n - 1) / (size - 1)
    i0 = np.minimum(np.floor(src).astype(np.int64), n - 2)
    f = (src - i0)[:, None]
    rows = coarse[i0] * (1.0 - f[:, :, None]) + coarse[i0 + 1] * f[:, :, None]
    cols = rows[:, i0] * (1.0 - f[None, :, :]) + rows[:, i0 + 1] * f[None, :, :]
    return cols


class SyntheticTrackStore:
    """Deterministische Spuren; `frame(t_idx, f)` und `box(t_idx, f)` rendern auf Abruf."""

    def __init__(self, cfg: SyntheticConfig) -> None:
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.tracks: List[TrackSpec] = [self._make_track(rng) for _ in range(cfg.num_tracks)]
        log.info("Synthetische Spuren: %d x %d Frames (fast_motion=%s)", cfg.num_tracks, cfg.frames_per_track, cfg.fast_motion)

    def __len__(self) -> int:
        return len(self.tracks)

    @property
    def frames_per_track(self) -> int:
        return self.cfg.frames_per_track

    def _make_track(self, rng: np.random.Generator) -> TrackSpec:
        cfg = self.cfg
        size = cfg.frame_size
        w0 = rng.uniform(*cfg.object_size)
        h0 = float(np.clip(w0 * rng.uniform(0.6, 1.6), cfg.object_size[0] * 0.6, cfg.object_size[1] * 1.2))
        speed = rng.uniform(*cfg.speed) * (4.0 if cfg.fast_motion else 1.0)
        angle = rng.uniform(0.0, 2.0 * np.pi)
        margin = max(w0, h0)
        occluder = None
        if rng.uniform() < cfg.occluder_prob:
            occluder = (rng.uniform(0, size), rng.uniform(0, size), rng.uniform(10, 30), rng.uniform(40, 120))
        return TrackSpec(
            x0=rng.uniform(margin, size - margin),
            y0=rng.uniform(margin, size - margin),
            vx=speed * np.cos(angle),
            vy=speed * np.sin(angle),
            w0=w0,
            h0=h0,
            drift_period=rng.uniform(30.0, 90.0),
            shape="ellipse" if rng.uniform() < 0.5 else "rect",
            colors=rng.uniform(30, 225, size=(2, 3)),
            stripe=rng.uniform(4.0, 12.0),
            background=rng.uniform(60, 200, size=(6, 6, 3)),
            occluder=occluder,
        )

    def _check(self, track: int, frame: int) -> TrackSpec:
        if not 0 <= track < len(self.tracks):
            raise IndexError(f"Spur {track} außerhalb 0..{len(self.tracks) - 1}")
        if not 0 <= frame < self.cfg.frames_per_track:
            raise IndexError(f"Frame {frame} außerhalb 0..{self.cfg.frames_per_track - 1}")
        return self.tracks[track]

    def box(self, track: int, frame: int) -> Box:
        spec = self._check(track, frame)
        factor = 1.0 + self.cfg.scale_drift * np.sin(2.0 * np.pi * frame / spec.drift_period)
        w, h = spec.w0 * factor, spec.h0 * factor
        size = self.cfg.frame_size
        cx = _reflect(spec.x0 + spec.vx * frame, w / 2.0, size - w / 2.0)
        cy = _reflect(spec.y0 + spec.vy * frame, h / 2.0, size - h / 2.0)
        return Box(cx, cy, float(w), float(h))

    def frame(self, track: int, frame: int) -> np.ndarray:
        spec = self._check(track, frame)
        size = self.cfg.frame_size
        img = _upsample(spec.background, size)
        b = self.box(track, frame)
        yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
        dx, dy = (xx - b.cx) / (b.w / 2.0), (yy - b.cy) / (b.h / 2.0)
        if spec.shape == "ellipse":
            mask = dx * dx + dy * dy <= 1.0
        else:
            mask = (np.abs(dx) <= 1.0) & (np.abs(dy) <= 1.0)
        # Streifentextur relativ zum Objekt, damit sie mitwandert
        stripes = (np.floor((xx - b.cx + yy - b.cy) / spec.stripe) % 2).astype(bool)
        texture = np.where(stripes[..., None], spec.colors[0], spec.colors[1])
        img = np.where(mask[..., None], texture, img)
        if spec.occluder is not None:
            ox, oy, ow, oh = spec.occluder
            occ = (np.abs(xx - ox) <= ow / 2) & (np.abs(yy - oy) <= oh / 2)
            img = np.where(occ[..., None], 128.0, img)
        return np.clip(np.rint(img), 0, 255).astype(np.uint8)

    def sequence(self, track: int, length: int | None = None) -> Tuple[List[np.ndarray], List[Box]]:
        n = self.cfg.frames_per_track if length is None else min(length, self.cfg.frames_per_track)
        return [self.frame(track, f) for f in range(n)], [self.box(track, f) for f in range(n)]


def constant_velocity_sequence(
    n_frames: int = 50, *, seed: int = 1234, frame_size: int = 320, fast_motion: bool = False
) -> Tuple[List[np.ndarray], List[Box]]:
    """Einzelne zurückgehaltene Sequenz ohne Verdecker und ohne Größendrift."""
    cfg = SyntheticConfig(
        num_tracks=1,
        frames_per_track=n_frames,
        frame_size=frame_size,
        scale_drift=0.0,
        occluder_prob=0.0,
        fast_motion=fast_motion,
        seed=seed,
    )
    return SyntheticTrackStore(cfg).sequence(0)
