"""
Dataset ingestion

Loaders for IDX (MNIST family) and CIFAR-10 binary files plus small
synthetic generators, all returning a Dataset.
"""

from .batches import batch_iterator
from .cifar import load_cifar10_binary
from .dataset import Dataset
from .idx import load_idx, write_idx
from .synthetic import SYNTHETIC_KINDS, synthetic_dataset

__all__ = [
    "Dataset",
    "SYNTHETIC_KINDS",
    "batch_iterator",
    "load_cifar10_binary",
    "load_idx",
    "synthetic_dataset",
    "write_idx",
]
