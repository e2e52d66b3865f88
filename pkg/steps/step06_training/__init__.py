from .augment import AugmentFlags, augment
from .imaging import context_size, crop_patch, to_input
from .optim import SGD, LrScheduleConfig, clip_grad_norm, lr_schedule, sgd_step
from .sampling import PairConfig, TrainPair, sample_pair
from .synthetic import SyntheticConfig, SyntheticTrackStore, constant_velocity_sequence
from .trainer import PhaseConfig, StageConfig, TrainConfig, TrainResult, default_stages, train_stages

__all__ = [
    "AugmentFlags", "augment", "context_size", "crop_patch", "to_input",
    "SGD", "LrScheduleConfig", "clip_grad_norm", "lr_schedule", "sgd_step",
    "PairConfig", "TrainPair", "sample_pair",
    "SyntheticConfig", "SyntheticTrackStore", "constant_velocity_sequence",
    "PhaseConfig", "StageConfig", "TrainConfig", "TrainResult", "default_stages", "train_stages",
]
