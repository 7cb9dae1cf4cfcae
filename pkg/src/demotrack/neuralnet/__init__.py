from .autograd import Var, no_grad
from .checkpoint import (CheckpointError, checkpoint_digest, load_checkpoint, load_into,
                         save_checkpoint)
from .model import (Graph, GraphStateError, ModelConfig, PolicyValueNet, RecurrentState,
                    init_parameters, parameter_shapes)

__all__ = [
    "CheckpointError", "Graph", "GraphStateError", "ModelConfig", "PolicyValueNet",
    "RecurrentState", "Var", "checkpoint_digest", "init_parameters", "load_checkpoint",
    "load_into", "no_grad", "parameter_shapes", "save_checkpoint",
]
