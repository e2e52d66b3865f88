from .backbone import (
    BackboneConfig, FeaturePyramid, branch_split, extract_pyramid, init_backbone_params,
)

__all__ = ["BackboneConfig", "FeaturePyramid", "branch_split", "extract_pyramid", "init_backbone_params"]
