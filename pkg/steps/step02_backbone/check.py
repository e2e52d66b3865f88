# steps/step02_backbone/check.py
from __future__ import annotations

import sys

import numpy as np

from steps.step01_numerics.params import ParamStore
from steps.step01_numerics.tensor import Tensor
from steps.step02_backbone.backbone import BackboneConfig, extract_pyramid, init_backbone_params


def main() -> None:
    cfg = BackboneConfig(channels=8, widths=(4, 8, 8))
    store = ParamStore()
    init_backbone_params(store, cfg, np.random.default_rng(cfg.seed))
    rng = np.random.default_rng(1)
    pyr = extract_pyramid(
        Tensor(rng.uniform(-0.5, 0.5, (3, 127, 127))),
        Tensor(rng.uniform(-0.5, 0.5, (3, 255, 255))),
        cfg,
        store,
    )
    for (t, d), lvl in zip(pyr.levels, pyr.level_ids):
        print(f"[INFO] {lvl}: template {t.shape}, detection {d.shape}")
        if t.shape != (8, 7, 7) or d.shape != (8, 31, 31):
            print("❌ Unerwartete Pyramiden-Form")
            sys.exit(1)
    print("✅ step02: Backbone-Pyramide OK")


if __name__ == "__main__":
    main()
