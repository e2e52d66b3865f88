from .tensor import (
    GradTape, NonFiniteError, ShapeError, Tensor, current_mode, precision,
)
from .params import ParamStore, group_of
from .container import ContainerFormatError
from . import ops

__all__ = [
    "GradTape", "NonFiniteError", "ShapeError", "Tensor", "current_mode", "precision",
    "ParamStore", "group_of", "ContainerFormatError", "ops",
]
