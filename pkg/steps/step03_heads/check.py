# steps/step03_heads/check.py
from __future__ import annotations

import sys

import numpy as np

from steps.step01_numerics.tensor import Tensor
from steps.step02_backbone.backbone import BackboneConfig
from steps.step03_heads.model import ModelConfig, forward_model, init_model_params


def main() -> None:
    cfg = ModelConfig(backbone=BackboneConfig(channels=8, widths=(4, 8, 8)))
    params = init_model_params(cfg)
    rng = np.random.default_rng(3)
    out = forward_model(
        params,
        Tensor(rng.uniform(-0.5, 0.5, (3, 127, 127))),
        Tensor(rng.uniform(-0.5, 0.5, (3, 255, 255))),
        cfg,
    )
    print(f"[INFO] cls {out.cls.shape}, reg {out.reg.shape}, loc {out.loc.shape}")
    if out.cls.shape != (10, 25, 25) or out.reg.shape != (20, 25, 25) or out.loc.shape != (2, 25, 25):
        print("❌ Unerwartete Ausgabeformen")
        sys.exit(1)
    for branch, gamma in out.gammas.items():
        if abs(float(gamma.data.sum()) - 1.0) > 1e-12:
            print(f"❌ gamma[{branch}] summiert nicht zu 1")
            sys.exit(1)
    print("✅ step03: Köpfe, Attention und Fusion OK")


if __name__ == "__main__":
    main()
