from . import ops
from .optim import NonFiniteGradient, OptimizerState, make_optimizer, optimizer_step, step_tensors
from .tensor import OPS, Graph, ShapeError, Tensor, backward, tensor

__all__ = [
    "ops",
    "OPS",
    "Graph",
    "ShapeError",
    "Tensor",
    "backward",
    "tensor",
    "NonFiniteGradient",
    "OptimizerState",
    "make_optimizer",
    "optimizer_step",
    "step_tensors",
]
