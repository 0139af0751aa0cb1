"""
IDX file format (MNIST family)

A big-endian header: two zero bytes, a type code, the number of
dimensions, then one 32-bit extent per dimension, followed by the data.
Only unsigned-byte payloads are supported.
"""

import gzip
import logging
import struct

import numpy as np

from metaquant.core.exceptions import DataFormatError

from .dataset import Dataset

LOG = logging.getLogger(__name__)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


def _open(path, mode="rb"):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def _read_idx(path, expected_magic):
    with _open(path) as fileobj:
        payload = fileobj.read()
    if len(payload) < 4:
        raise DataFormatError("%s: truncated IDX header" % path)
    (magic,) = struct.unpack(">I", payload[:4])
    if magic != expected_magic:
        raise DataFormatError(
            "%s: bad IDX magic, expected 0x%08x found 0x%08x" % (path, expected_magic, magic)
        )
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(payload) < header:
        raise DataFormatError("%s: truncated IDX header" % path)
    dims = struct.unpack(">%dI" % ndim, payload[4:header])
    count = int(np.prod(dims, dtype=np.int64))
    if len(payload) - header < count:
        raise DataFormatError(
            "%s: truncated IDX data, expected %d bytes found %d"
            % (path, count, len(payload) - header)
        )
    return np.frombuffer(payload, dtype=np.uint8, count=count, offset=header).reshape(dims)


def load_idx(image_path, label_path, split="train", limit=None, num_classes=10):
    """Read an IDX image/label file pair

    Pixels are scaled by 1/255 into count x 1 x height x width.

    :raises: DataFormatError on bad magic, truncation or count mismatch
    """
    images = _read_idx(image_path, IMAGE_MAGIC)
    labels = _read_idx(label_path, LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            "%s has %d images but %s has %d labels"
            % (image_path, images.shape[0], label_path, labels.shape[0])
        )
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    pixels = images.astype(np.float32)[:, np.newaxis, :, :] / np.float32(255)
    LOG.debug("Loaded %d IDX records from %s", len(labels), image_path)
    return Dataset(pixels, labels, split=split, num_classes=num_classes)


def write_idx(path, array):
    """Write a uint8 array as an IDX file (images: 3 dims, labels: 1 dim)"""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    with _open(path, "wb") as fileobj:
        fileobj.write(struct.pack(">I", magic))
        fileobj.write(struct.pack(">%dI" % array.ndim, *array.shape))
        fileobj.write(array.tobytes())
