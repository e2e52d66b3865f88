from .targets import CenterTargetMap, gaussian_center_map, gaussian_radius
from .losses import LossBreakdown, LossConfig, compute_losses, loss_cls, loss_loc, loss_reg, loss_total

__all__ = [
    "CenterTargetMap", "gaussian_center_map", "gaussian_radius",
    "LossBreakdown", "LossConfig", "compute_losses", "loss_cls", "loss_loc", "loss_reg", "loss_total",
]
