"""
Dataset container
"""

import numpy as np

from metaquant.core.exceptions import DataFormatError


class Dataset(object):
    """Images (count x ...) and integer labels

    Image arrays are count x channels x height x width for image data and
    count x features for the synthetic point sets.
    """

    def __init__(self, images, labels, split="train", num_classes=None):
        images = np.asarray(images, dtype=np.float32)
        labels = np.asarray(labels, dtype=np.int64)
        if images.shape[0] != labels.shape[0]:
            raise DataFormatError(
                "%d images but %d labels in %s split" % (images.shape[0], labels.shape[0], split)
            )
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if labels.size else 0
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise DataFormatError("labels outside [0, %d) in %s split" % (num_classes, split))
        self.images = images
        self.labels = labels
        self.split = split
        self.num_classes = int(num_classes)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def input_shape(self):
        return self.images.shape[1:]

    def subset(self, count):
        """First ``count`` records (all when count is None or larger)"""
        if count is None or count >= len(self):
            return self
        return Dataset(self.images[:count], self.labels[:count], self.split, self.num_classes)

    def __repr__(self):
        return "<Dataset %s: %d x %s, %d classes>" % (
            self.split,
            len(self),
            self.input_shape,
            self.num_classes,
        )
