"""
Mini-batch iteration
"""

import numpy as np


def batch_iterator(dataset, batch_size, seed, epoch=0, shuffle=True):
    """Yield (images, labels) batches covering ``dataset`` once

    The order depends only on (seed, epoch); the last batch may be short.
    """
    if batch_size < 1:
        raise ValueError("batch size must be >= 1, got %r" % batch_size)
    order = np.arange(len(dataset))
    if shuffle:
        np.random.RandomState([seed, epoch]).shuffle(order)
    for start in range(0, len(order), batch_size):
        index = order[start : start + batch_size]
        yield dataset.images[index], dataset.labels[index]
