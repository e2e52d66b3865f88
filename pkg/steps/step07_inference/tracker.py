# steps/step07_inference/tracker.py
"""
Einzelobjekt-Tracking über eine Bildsequenz.

Das Template wird genau einmal aus dem ersten Frame kodiert und danach nie
aktualisiert. Pro Frame: Suchausschnitt um den letzten Zustand, Vorwärtspass,
Fusion, Auswahl, Glättung und Begrenzung auf den Frame.
"""

from __future__ import annotations

import logging
import time
from typing import List, Sequence

import numpy as np

from steps.step01_numerics import ops
from steps.step01_numerics.params import Params
from steps.step03_heads.model import ModelConfig, forward_search, template_features
from steps.step04_anchors.anchors import AnchorConfig, decode_deltas, generate_anchors
from steps.step04_anchors.boxes import Box
from steps.step06_training.imaging import context_size, crop_patch, to_input

from .postprocess import (
    FusionConfig,
    ScoreVolume,
    SearchWindow,
    TrackState,
    clip_to_frame,
    cosine_window,
    fuse_scores,
    scale_penalty,
    select_and_update,
)

log = logging.getLogger(__name__)


class Tracker:
    def __init__(
        self,
        params: Params,
        model_cfg: ModelConfig = ModelConfig(),
        anchor_cfg: AnchorConfig = AnchorConfig(),
        fusion_cfg: FusionConfig = FusionConfig(),
    ) -> None:
        bb = model_cfg.backbone
        if anchor_cfg.anchor_num != model_cfg.heads.anchor_num:
            raise ValueError(f"Ankeranzahl {anchor_cfg.anchor_num} != {model_cfg.heads.anchor_num}")
        self.params = params
        self.model_cfg = model_cfg
        self.anchor_cfg = anchor_cfg
        self.fusion_cfg = fusion_cfg
        self.anchors = generate_anchors(bb.score_size, bb.score_size, anchor_cfg, search_size=bb.search_size)
        self.window = cosine_window(bb.score_size, bb.score_size)
        self.state: TrackState | None = None
        self._pad_value: np.ndarray | None = None
        self.frame_times: List[float] = []

    def _crop_size(self, box: Box) -> float:
        return context_size(box.w, box.h, self.fusion_cfg.context_amount)

    def init(self, frame: np.ndarray, box: Box) -> TrackState:
        bb = self.model_cfg.backbone
        self._pad_value = frame.reshape(-1, frame.shape[-1]).mean(axis=0)
        patch = crop_patch(frame, (box.cx, box.cy), self._crop_size(box), bb.exemplar_size, self._pad_value)
        feats = template_features(self.params, to_input(patch), self.model_cfg)
        self.state = TrackState(box, 1.0, tuple(feats))
        self.frame_times = []
        return self.state

    def score_volume(self, frame: np.ndarray, window: SearchWindow) -> tuple[ScoreVolume, np.ndarray]:
        """Vorwärtspass auf dem Suchausschnitt -> (Score-Volumen, Deltas [4, k, h, w])."""
        assert self.state is not None
        bb = self.model_cfg.backbone
        patch = crop_patch(frame, window.center, window.crop_size, bb.search_size, self._pad_value)
        out = forward_search(self.params, self.state.template, to_input(patch), self.model_cfg)
        k = self.anchors.k
        _, h, w = out.loc.shape
        u = ops.softmax(ops.reshape(out.cls, (2, k, h, w)), axis=0).data[1].astype(np.float64)
        c = ops.softmax(out.loc, axis=0).data[1].astype(np.float64)
        deltas = out.reg.data.reshape(4, k, h, w).astype(np.float64)
        candidates = decode_deltas(self.anchors.boxes, np.moveaxis(deltas, 0, -1), self.anchor_cfg.delta_mode)
        rho = scale_penalty(candidates, window.to_patch(self.state.box), self.fusion_cfg.penalty_k)
        theta = fuse_scores(u, c, self.window, rho, self.fusion_cfg)
        return ScoreVolume(theta, u, rho), deltas

    def update(self, frame: np.ndarray) -> TrackState:
        if self.state is None:
            raise RuntimeError("Tracker.update() vor init()")
        bb = self.model_cfg.backbone
        t0 = time.perf_counter()
        s_z = self._crop_size(self.state.box)
        window = SearchWindow((self.state.box.cx, self.state.box.cy), s_z * bb.search_size / bb.exemplar_size, bb.search_size)
        volume, deltas = self.score_volume(frame, window)
        new = select_and_update(
            volume, deltas, self.anchors, self.state, window, self.fusion_cfg, delta_mode=self.anchor_cfg.delta_mode
        )
        box = clip_to_frame(new.box, frame.shape, self.fusion_cfg.min_size)
        self.state = TrackState(box, new.score, self.state.template)
        self.frame_times.append(time.perf_counter() - t0)
        return self.state

    @property
    def fps(self) -> float:
        total = sum(self.frame_times)
        return len(self.frame_times) / total if total > 0 else 0.0


def track_sequence(
    frames: Sequence[np.ndarray],
    init_box: Box,
    params: Params,
    model_cfg: ModelConfig = ModelConfig(),
    anchor_cfg: AnchorConfig = AnchorConfig(),
    fusion_cfg: FusionConfig = FusionConfig(),
) -> List[TrackState]:
    if len(frames) == 0:
        raise ValueError("track_sequence: leere Sequenz")
    tracker = Tracker(params, model_cfg, anchor_cfg, fusion_cfg)
    states = [tracker.init(frames[0], init_box)]
    for frame in frames[1:]:
        states.append(tracker.update(frame))
    if len(frames) > 1:
        log.info("Sequenz verfolgt: %d Frames, %.1f fps", len(frames), tracker.fps)
    return states
