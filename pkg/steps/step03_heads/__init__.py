from .heads import (
    BranchOutputs, HeadConfig, aspp, cls_level, forward_heads, global_context, loc_correlation, reg_level,
)
from .attention import AttentionConfig, attention_weights
from .model import ModelConfig, forward_model, forward_search, init_model_params, template_features

__all__ = [
    "BranchOutputs", "HeadConfig", "aspp", "cls_level", "forward_heads", "global_context",
    "loc_correlation", "reg_level", "AttentionConfig", "attention_weights",
    "ModelConfig", "forward_model", "forward_search", "init_model_params", "template_features",
]
