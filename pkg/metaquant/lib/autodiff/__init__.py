"""
Minimal reverse-mode automatic differentiation over numpy arrays
"""

from .ops import OpKind
from .tape import (
    GraphNode,
    Tape,
    constant,
    current_tape,
    detach,
    leaf,
    rebase_leaf,
    record,
)
from .tensor import Tensor, as_tensor, get_dtype, precision, set_debug, set_precision

__all__ = [
    "OpKind",
    "GraphNode",
    "Tape",
    "Tensor",
    "as_tensor",
    "constant",
    "current_tape",
    "detach",
    "get_dtype",
    "leaf",
    "precision",
    "rebase_leaf",
    "record",
    "set_debug",
    "set_precision",
]
