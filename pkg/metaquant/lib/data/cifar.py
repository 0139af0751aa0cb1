"""
CIFAR-10 binary format: 3073-byte records of one label byte followed by
3072 channel-major (3 x 32 x 32) pixel bytes
"""

import logging
import os

import numpy as np

from metaquant.core.exceptions import DataFormatError

from .dataset import Dataset

LOG = logging.getLogger(__name__)

RECORD_SIZE = 3073
IMAGE_SHAPE = (3, 32, 32)


def _read_records(path):
    size = os.path.getsize(path)
    if size % RECORD_SIZE:
        raise DataFormatError(
            "%s: size %d is not a multiple of the %d-byte record" % (path, size, RECORD_SIZE)
        )
    if not size:
        LOG.warning("%s is empty", path)
    return np.fromfile(path, dtype=np.uint8).reshape(-1, RECORD_SIZE)


def channel_stats(images):
    """Per-channel (mean, std) of a count x C x H x W array"""
    mean = images.mean(axis=(0, 2, 3), dtype=np.float64)
    std = images.std(axis=(0, 2, 3), dtype=np.float64)
    return mean, np.where(std > 0, std, 1.0)


def load_cifar10_binary(paths, split="train", limit=None, standardize=True, stats=None):
    """Read one or more CIFAR-10 binary batch files

    :param limit: keep only the first ``limit`` records
    :param standardize: apply per-channel standardization after /255
    :param stats: (mean, std) to standardize with, e.g. the training
                  split's; computed from this data when None
    :returns: Dataset with a ``channel_stats`` attribute
    """
    if isinstance(paths, str):
        paths = [paths]
    records = [_read_records(path) for path in paths]
    records = np.concatenate(records, axis=0) if records else np.zeros((0, RECORD_SIZE), np.uint8)
    if limit is not None:
        records = records[:limit]
    labels = records[:, 0].astype(np.int64)
    images = records[:, 1:].reshape((-1,) + IMAGE_SHAPE).astype(np.float32) / np.float32(255)
    if standardize and len(records):
        mean, std = stats if stats is not None else channel_stats(images)
        shape = (1, IMAGE_SHAPE[0], 1, 1)
        images = ((images - mean.reshape(shape)) / std.reshape(shape)).astype(np.float32)
    else:
        mean, std = (None, None) if stats is None else stats
    dataset = Dataset(images, labels, split=split, num_classes=10)
    dataset.channel_stats = (mean, std)
    LOG.debug("Loaded %d CIFAR-10 records from %s", len(dataset), ", ".join(paths))
    return dataset
