# steps/step04_anchors/check.py
from __future__ import annotations

import sys

from steps.step04_anchors.anchors import AnchorConfig, generate_anchors, match_anchors
from steps.step04_anchors.boxes import Box, iou


def main() -> None:
    cfg = AnchorConfig()
    anchors = generate_anchors(25, 25, cfg)
    print(f"[INFO] {len(anchors)} Anker, k={anchors.k}")
    if len(anchors) != 3125:
        print("❌ Falsche Ankerzahl")
        sys.exit(1)
    if abs(iou(Box(1, 1, 2, 2), Box(2, 2, 2, 2)) - 1 / 7) > 1e-12:
        print("❌ IoU-Beispiel falsch")
        sys.exit(1)
    labels = match_anchors(anchors, anchors.box(2, 12, 12), cfg)
    print(f"[INFO] Positive: {labels.num_pos}, Negative: {int(labels.negative.sum())}")
    if labels.labels[2, 12, 12] != 1:
        print("❌ Identischer Anker nicht positiv")
        sys.exit(1)
    print("✅ step04: Anker, IoU und Zuordnung OK")


if __name__ == "__main__":
    main()
