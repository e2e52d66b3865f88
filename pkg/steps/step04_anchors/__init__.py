from .boxes import Box, iou, iou_matrix
from .anchors import (
    AnchorConfig, AnchorSet, MatchLabels, decode_delta, encode_delta, generate_anchors, match_anchors,
)

__all__ = [
    "Box", "iou", "iou_matrix", "AnchorConfig", "AnchorSet", "MatchLabels",
    "decode_delta", "encode_delta", "generate_anchors", "match_anchors",
]
