"""
Functional wrappers recording onto the active tape.

Plain arrays and Python scalars passed as operands are wrapped as constants.
"""

import numpy as np

from .ops import OpKind
from .tape import GraphNode, constant, record


def _node(value):
    if isinstance(value, GraphNode):
        return value
    return constant(value)


def add(a, b):
    return record(OpKind.ADD, [_node(a), _node(b)])


def sub(a, b):
    return record(OpKind.SUB, [_node(a), _node(b)])


def mul(a, b):
    return record(OpKind.MUL, [_node(a), _node(b)])


def div(a, b):
    return record(OpKind.DIV, [_node(a), _node(b)])


def neg(a):
    return record(OpKind.NEG, [_node(a)])


def scale(a, factor):
    return record(OpKind.SCALE, [_node(a)], factor=float(factor))


def matmul(a, b):
    return record(OpKind.MATMUL, [_node(a), _node(b)])


def conv2d(x, w, stride=1, padding=0):
    return record(OpKind.CONV2D, [_node(x), _node(w)], stride=stride, padding=padding)


def relu(a):
    return record(OpKind.RELU, [_node(a)])


def tanh(a):
    return record(OpKind.TANH, [_node(a)])


def sigmoid(a):
    return record(OpKind.SIGMOID, [_node(a)])


def sqrt(a):
    return record(OpKind.SQRT, [_node(a)])


def reshape(a, shape):
    return record(OpKind.RESHAPE, [_node(a)], shape=tuple(shape))


def flatten(a):
    """Collapse all but the leading (batch) axis"""
    a = _node(a)
    return reshape(a, (a.shape[0], -1))


def concat(nodes, axis=-1):
    return record(OpKind.CONCAT, [_node(n) for n in nodes], axis=axis)


def slice_last(a, start, stop):
    return record(OpKind.SLICE, [_node(a)], start=start, stop=stop)


def softmax_cross_entropy(logits, labels):
    return record(OpKind.SOFTMAX_CE, [_node(logits)], labels=np.asarray(labels, dtype=np.int64))


def sum(a, axis=None):  # pylint: disable=redefined-builtin
    return record(OpKind.SUM, [_node(a)], axis=axis)


def mean(a, axis=None):
    return record(OpKind.MEAN, [_node(a)], axis=axis)


def avgpool2d(x, size=2):
    return record(OpKind.AVGPOOL, [_node(x)], size=size)


def downsample_pad(x, channels):
    return record(OpKind.DOWNSAMPLE_PAD, [_node(x)], channels=channels)
