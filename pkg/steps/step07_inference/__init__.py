from .postprocess import (
    FusionConfig, ScoreVolume, SearchWindow, TrackState, cosine_window, fuse_scores, scale_penalty,
    select_and_update, select_peak,
)
from .tracker import Tracker, track_sequence
from .ablation import AblationVariant, fast_motion_suite, run_ablation, summarize_ablation

__all__ = [
    "FusionConfig", "ScoreVolume", "SearchWindow", "TrackState", "cosine_window", "fuse_scores",
    "scale_penalty", "select_and_update", "select_peak", "Tracker", "track_sequence",
    "AblationVariant", "fast_motion_suite", "run_ablation", "summarize_ablation",
]
