# steps/step05_losses/check.py
from __future__ import annotations

import math
import sys

import numpy as np

from steps.step01_numerics.tensor import Tensor
from steps.step04_anchors.anchors import MatchLabels
from steps.step04_anchors.boxes import Box
from steps.step05_losses.losses import loss_cls, loss_total
from steps.step05_losses.targets import gaussian_center_map


def main() -> None:
    labels = MatchLabels(np.ones((1, 1, 1), dtype=np.int8), np.zeros((4, 1, 1, 1)))
    value = loss_cls(Tensor(np.zeros((2, 1, 1))), labels).item()
    if abs(value - (-0.5 * math.log(0.5))) > 1e-12:
        print(f"❌ loss_cls Beispiel: {value}")
        sys.exit(1)

    parts = loss_total(Tensor(1.0), Tensor(2.0), Tensor(3.0))
    if parts.total != 6.0:
        print(f"❌ loss_total Beispiel: {parts.total}")
        sys.exit(1)

    cmap = gaussian_center_map(Box(127.0, 127.0, 64.0, 64.0), 25, 25, 8)
    print(f"[INFO] Zentrum {cmap.center}, sigma={cmap.sigma:.4f}")
    if cmap.values[cmap.center] != 1.0:
        print("❌ Zentrumswert != 1")
        sys.exit(1)
    print("✅ step05: Verlustterme und Zielkarten OK")


if __name__ == "__main__":
    main()
