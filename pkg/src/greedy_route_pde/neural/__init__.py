from .autodiff import Tensor, parameter
from .layers import DeepOnetModel, LstmRouter, Mlp
from .optim import Adam, clip_global_norm
from .checkpoint import (
    KIND_DEEPONET,
    KIND_ROUTER,
    checkpoint_load,
    checkpoint_save,
)

__all__ = [
    "Tensor", "parameter", "Mlp", "DeepOnetModel", "LstmRouter",
    "Adam", "clip_global_norm", "checkpoint_save", "checkpoint_load",
    "KIND_DEEPONET", "KIND_ROUTER",
]
