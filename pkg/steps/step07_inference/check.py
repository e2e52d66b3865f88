from __future__ import annotations

import sys

import numpy as np

from steps.step02_backbone.backbone import BackboneConfig
from steps.step03_heads.model import ModelConfig, init_model_params
from steps.step06_training.synthetic import constant_velocity_sequence
from steps.step07_inference.postprocess import FusionConfig, cosine_window, fuse_scores
from steps.step07_inference.tracker import track_sequence


def main() -> None:
    one = np.ones((1, 1, 1))
    theta = fuse_scores(one, np.zeros((1, 1)), np.zeros((1, 1)), one, FusionConfig())
    if abs(theta.item() - 0.42) > 1e-12:
        print(f"❌ Fusion Einzelzelle: {theta.item()}")
        sys.exit(1)

    win = cosine_window(5, 5)
    if win[0, 0] != 0.0 or win[2, 2] != 1.0:
        print("❌ Kosinusfenster Rand/Zentrum")
        sys.exit(1)

    cfg = ModelConfig(backbone=BackboneConfig(channels=8, widths=(4, 8, 8)))
    params = init_model_params(cfg)
    frames, boxes = constant_velocity_sequence(3, seed=7)
    states = track_sequence(frames, boxes[0], params, cfg)
    print(f"[INFO] {len(states)} Zustände, letzte Box {states[-1].box}")
    if len(states) != 3 or states[0].box != boxes[0]:
        print("❌ Trajektorie unvollständig")
        sys.exit(1)
    print("✅ step07: Fusion, Auswahl und Tracking OK")


if __name__ == "__main__":
    main()
