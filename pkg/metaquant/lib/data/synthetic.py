"""
Synthetic 2-d classification sets for fast runs
"""

import numpy as np

from .dataset import Dataset

SYNTHETIC_KINDS = ("two-gaussians", "ring")

GAUSSIAN_CENTER = 2.0
RING_RADII = (1.0, (1.5, 2.5))
RING_NOISE = 0.1


def _balanced_labels(count, rng):
    labels = np.arange(count) % 2
    rng.shuffle(labels)
    return labels


def synthetic_dataset(kind, count, seed, split="train"):
    """Deterministic two-class point set

    ``two-gaussians``: unit-variance blobs at (-2, -2) and (2, 2).
    ``ring``: a disk of radius 1 inside an annulus 1.5 <= r <= 2.5, not
    linearly separable.
    """
    if kind not in SYNTHETIC_KINDS:
        raise ValueError("Unknown synthetic dataset %r" % kind)
    if count < 2:
        raise ValueError("synthetic datasets need at least 2 points")
    rng = np.random.RandomState(seed)
    labels = _balanced_labels(count, rng)
    if kind == "two-gaussians":
        centers = np.where(labels[:, np.newaxis] == 0, -GAUSSIAN_CENTER, GAUSSIAN_CENTER)
        points = centers + rng.normal(size=(count, 2))
    else:
        inner, (low, high) = RING_RADII
        radius = np.where(
            labels == 0,
            inner * np.sqrt(rng.uniform(size=count)),
            rng.uniform(low, high, size=count),
        )
        angle = rng.uniform(0, 2 * np.pi, size=count)
        points = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
        points += rng.normal(scale=RING_NOISE, size=points.shape)
    return Dataset(points, labels, split=split, num_classes=2)
