from __future__ import annotations

import math
import sys

import numpy as np

from steps.step02_backbone.backbone import BackboneConfig
from steps.step03_heads.model import ModelConfig
from steps.step04_anchors.anchors import AnchorConfig
from steps.step05_losses.losses import LossConfig
from steps.step06_training.optim import lr_schedule, sgd_step
from steps.step06_training.synthetic import SyntheticConfig
from steps.step06_training.trainer import PhaseConfig, StageConfig, TrainConfig, train_stages


def main() -> None:
    for epoch, expected in ((1, 0.001), (5, 0.005), (20, 0.0005)):
        lr = lr_schedule(epoch)
        if abs(lr - expected) > 1e-12:
            print(f"❌ lr_schedule({epoch}) = {lr}, erwartet {expected}")
            sys.exit(1)

    p, _ = sgd_step(np.array([1.0]), np.array([1.0]), np.zeros(1), 0.1, 0.0, 0.0)
    if abs(p[0] - 0.9) > 1e-12:
        print(f"❌ sgd_step Beispiel: {p[0]}")
        sys.exit(1)

    model = ModelConfig(backbone=BackboneConfig(channels=8, widths=(4, 8, 8), search_size=127))
    cfg = TrainConfig(
        iterations_per_epoch=2,
        stages=(StageConfig(index=1, phases=(PhaseConfig(name="heads", epochs=1, trainable=("cls", "reg")),)),),
        synthetic=SyntheticConfig(num_tracks=2, frames_per_track=20),
    )
    result = train_stages(model, AnchorConfig(), LossConfig(), cfg, seed=0)
    totals = result.records["total"].tolist()
    print(f"[INFO] {len(totals)} Schritte, Verluste {[round(t, 4) for t in totals]}")
    if len(totals) != 2 or not all(math.isfinite(t) for t in totals):
        print("❌ Trainingsschritte fehlen oder sind nicht endlich")
        sys.exit(1)
    print("✅ step06: Lernrate, SGD und Trainingsschleife OK")


if __name__ == "__main__":
    main()
