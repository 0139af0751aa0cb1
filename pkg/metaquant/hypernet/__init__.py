"""
Hypernetwork meta-quantizer designs
"""

from .base import (
    FlattenedPair,
    HyperNetDesign,
    HyperNetParams,
    RecurrentState,
    flatten_for_hypernet,
    hypernet_apply,
    init_hypernet,
    unflatten,
)

__all__ = [
    "FlattenedPair",
    "HyperNetDesign",
    "HyperNetParams",
    "RecurrentState",
    "flatten_for_hypernet",
    "hypernet_apply",
    "init_hypernet",
    "unflatten",
]
