from __future__ import annotations

import numpy as np
import pytest

from steps.step02_backbone.backbone import BackboneConfig
from steps.step03_heads.model import ModelConfig, init_model_params
from steps.step04_anchors.anchors import AnchorConfig


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model() -> ModelConfig:
    """Kleines Netz mit S == E: Detektionskarte 15x15, Scorekarte 9x9."""
    return ModelConfig(backbone=BackboneConfig(channels=8, widths=(4, 8, 8), search_size=127))


@pytest.fixture
def tiny_params(tiny_model):
    return init_model_params(tiny_model, seed=0)


@pytest.fixture
def anchor_cfg() -> AnchorConfig:
    return AnchorConfig()
