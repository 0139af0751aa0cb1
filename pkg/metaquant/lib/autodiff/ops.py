"""
Differentiable operation kinds.

Every op-kind maps to a Function subclass with a ``forward`` that computes the
value (saving what backward needs on the instance) and a ``backward`` that
returns one upstream-shaped gradient per parent, or None where no gradient
flows.  Quantizer kinds are registered by metaquant.lib.quant.
"""

import enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from metaquant.core.exceptions import ShapeError


class OpKind(enum.Enum):
    """Enumerated operation tags recorded on graph nodes"""

    LEAF = "leaf"
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    DIV = "div"
    NEG = "neg"
    SCALE = "scalar-scale"
    MATMUL = "matmul"
    CONV2D = "conv2d"
    RELU = "relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    SQRT = "sqrt"
    RESHAPE = "reshape"
    CONCAT = "concat"
    SLICE = "slice"
    SOFTMAX_CE = "softmax-cross-entropy"
    SUM = "sum"
    MEAN = "mean"
    AVGPOOL = "avgpool2d"
    DOWNSAMPLE_PAD = "downsample-pad"
    FAKE_QUANT = "fake-quantize"
    DOREFA_WEIGHT = "dorefa-weight"
    DOREFA_ACT = "dorefa-activation"
    ERROR_QUANT = "error-signal-quantize"


REGISTRY = {}


def register(kind):
    """Class decorator binding a Function to an op-kind"""

    def _wrap(cls):
        cls.kind = kind
        REGISTRY[kind] = cls
        return cls

    return _wrap


class Function(object):
    """Base op; one instance per recorded node doubles as its context"""

    kind = None

    def __init__(self, **attrs):
        self.attrs = attrs

    def check(self, *values):
        """Raise ShapeError if operands don't fit this op"""

    def forward(self, *values):
        raise NotImplementedError()

    def backward(self, grad):
        raise NotImplementedError()

    def release(self):
        """Drop saved arrays once the node is freed"""
        self.__dict__ = {"attrs": self.attrs}


def unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` undoing numpy broadcasting"""
    if grad.shape == tuple(shape):
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, extent in enumerate(shape) if extent == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class _Elementwise(Function):
    def check(self, *values):
        try:
            np.broadcast_shapes(*[v.shape for v in values])
        except ValueError:
            raise ShapeError(self.kind.value, *[v.shape for v in values])


@register(OpKind.ADD)
class Add(_Elementwise):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(grad, self.shapes[1])


@register(OpKind.SUB)
class Sub(_Elementwise):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(-grad, self.shapes[1])


@register(OpKind.MUL)
class Mul(_Elementwise):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return unbroadcast(grad * self.b, self.a.shape), unbroadcast(grad * self.a, self.b.shape)


@register(OpKind.DIV)
class Div(_Elementwise):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a / b

    def backward(self, grad):
        grad_a = grad / self.b
        grad_b = -grad * self.a / (self.b * self.b)
        return unbroadcast(grad_a, self.a.shape), unbroadcast(grad_b, self.b.shape)


@register(OpKind.NEG)
class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


@register(OpKind.SCALE)
class Scale(Function):
    def forward(self, a):
        return a * a.dtype.type(self.attrs["factor"])

    def backward(self, grad):
        return (grad * grad.dtype.type(self.attrs["factor"]),)


@register(OpKind.MATMUL)
class MatMul(Function):
    def check(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(self.kind.value, a.shape, b.shape)

    def forward(self, a, b):
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        return grad @ self.b.T, self.a.T @ grad


def im2col(x, size, stride, padding):
    """Unfold NCHW input into (N*Ho*Wo, C*k*k) patch rows"""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(x, (size, size), axis=(2, 3))[:, :, ::stride, ::stride]
    batch, channels, out_h, out_w = windows.shape[:4]
    cols = windows.transpose(0, 2, 3, 1, 4, 5)
    cols = cols.reshape(batch * out_h * out_w, channels * size * size)
    return cols, (out_h, out_w)


def col2im(dcols, input_shape, size, stride, padding, out_hw):
    """Scatter-add patch gradients back onto the NCHW input"""
    batch, channels, height, width = input_shape
    out_h, out_w = out_hw
    dpatch = dcols.reshape(batch, out_h, out_w, channels, size, size)
    dx = np.zeros(
        (batch, channels, height + 2 * padding, width + 2 * padding), dtype=dcols.dtype
    )
    for i in range(size):
        for j in range(size):
            dx[:, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride] += dpatch[
                :, :, :, :, i, j
            ].transpose(0, 3, 1, 2)
    if padding:
        dx = dx[:, :, padding:-padding, padding:-padding]
    return dx


@register(OpKind.CONV2D)
class Conv2d(Function):
    """Square-kernel 2d convolution, NCHW input, (out, in, k, k) weights"""

    def check(self, x, w):
        if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1] or w.shape[2] != w.shape[3]:
            raise ShapeError(self.kind.value, x.shape, w.shape)

    def forward(self, x, w):
        stride = self.attrs.get("stride", 1)
        padding = self.attrs.get("padding", 0)
        size = w.shape[2]
        cols, out_hw = im2col(x, size, stride, padding)
        wmat = w.reshape(w.shape[0], -1)
        self.x_shape, self.w, self.cols, self.out_hw = x.shape, w, cols, out_hw
        out = cols @ wmat.T
        return out.reshape(x.shape[0], out_hw[0], out_hw[1], w.shape[0]).transpose(0, 3, 1, 2)

    def backward(self, grad):
        w = self.w
        grad2 = grad.transpose(0, 2, 3, 1).reshape(-1, w.shape[0])
        dw = (grad2.T @ self.cols).reshape(w.shape)
        dcols = grad2 @ w.reshape(w.shape[0], -1)
        dx = col2im(
            dcols,
            self.x_shape,
            w.shape[2],
            self.attrs.get("stride", 1),
            self.attrs.get("padding", 0),
            self.out_hw,
        )
        return dx, dw


@register(OpKind.RELU)
class Relu(Function):
    def forward(self, a):
        self.mask = a > 0
        return np.where(self.mask, a, 0).astype(a.dtype)

    def backward(self, grad):
        # subgradient 0 at the kink
        return (grad * self.mask,)


@register(OpKind.TANH)
class Tanh(Function):
    def forward(self, a):
        self.out = np.tanh(a)
        return self.out

    def backward(self, grad):
        return (grad * (1 - self.out * self.out),)


@register(OpKind.SIGMOID)
class Sigmoid(Function):
    def forward(self, a):
        # split by sign so exp never overflows
        out = np.empty_like(a)
        pos = a >= 0
        out[pos] = 1 / (1 + np.exp(-a[pos]))
        exp_a = np.exp(a[~pos])
        out[~pos] = exp_a / (1 + exp_a)
        self.out = out
        return out

    def backward(self, grad):
        return (grad * self.out * (1 - self.out),)


@register(OpKind.SQRT)
class Sqrt(Function):
    def forward(self, a):
        self.out = np.sqrt(a)
        return self.out

    def backward(self, grad):
        # zero where the input is exactly zero instead of inf
        safe = np.where(self.out > 0, self.out, 1)
        return (np.where(self.out > 0, grad * 0.5 / safe, 0).astype(grad.dtype),)


@register(OpKind.RESHAPE)
class Reshape(Function):
    def check(self, a):
        shape = self.attrs["shape"]
        try:
            np.empty(a.shape, dtype=np.bool_).reshape(shape)
        except ValueError:
            raise ShapeError(self.kind.value, a.shape, shape)

    def forward(self, a):
        self.shape = a.shape
        return a.reshape(self.attrs["shape"])

    def backward(self, grad):
        return (grad.reshape(self.shape),)


@register(OpKind.CONCAT)
class Concat(Function):
    def check(self, *values):
        axis = self.attrs.get("axis", -1)
        ref = list(values[0].shape)
        for value in values[1:]:
            other = list(value.shape)
            if len(other) != len(ref):
                raise ShapeError(self.kind.value, values[0].shape, value.shape)
            del other[axis]
            cmp = list(ref)
            del cmp[axis]
            if other != cmp:
                raise ShapeError(self.kind.value, values[0].shape, value.shape)

    def forward(self, *values):
        axis = self.attrs.get("axis", -1)
        self.sizes = [v.shape[axis] for v in values]
        return np.concatenate(values, axis=axis)

    def backward(self, grad):
        axis = self.attrs.get("axis", -1)
        bounds = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, bounds, axis=axis))


@register(OpKind.SLICE)
class Slice(Function):
    """Contiguous slice along the last axis"""

    def check(self, a):
        if not 0 <= self.attrs["start"] < self.attrs["stop"] <= a.shape[-1]:
            raise ShapeError(self.kind.value, a.shape, (self.attrs["start"], self.attrs["stop"]))

    def forward(self, a):
        self.shape = a.shape
        return a[..., self.attrs["start"] : self.attrs["stop"]]

    def backward(self, grad):
        out = np.zeros(self.shape, dtype=grad.dtype)
        out[..., self.attrs["start"] : self.attrs["stop"]] = grad
        return (out,)


@register(OpKind.SOFTMAX_CE)
class SoftmaxCrossEntropy(Function):
    """Mean cross-entropy of (batch, classes) logits against integer labels"""

    def check(self, logits):
        labels = self.attrs["labels"]
        if logits.ndim != 2 or labels.shape != (logits.shape[0],):
            raise ShapeError(self.kind.value, logits.shape, labels.shape)

    def forward(self, logits):
        labels = self.attrs["labels"]
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        total = exp.sum(axis=1, keepdims=True)
        self.probs = exp / total
        rows = np.arange(logits.shape[0])
        losses = np.log(total[:, 0]) - shifted[rows, labels]
        return np.asarray(losses.mean(), dtype=logits.dtype)

    def backward(self, grad):
        labels = self.attrs["labels"]
        dlogits = self.probs.copy()
        dlogits[np.arange(dlogits.shape[0]), labels] -= 1
        return (dlogits * (grad / dlogits.shape[0]),)


@register(OpKind.SUM)
class Sum(Function):
    def forward(self, a):
        self.shape = a.shape
        return np.asarray(a.sum(axis=self.attrs.get("axis"), keepdims=True)).reshape(
            self._out_shape(a.shape)
        )

    def _out_shape(self, shape):
        axis = self.attrs.get("axis")
        if axis is None:
            return ()
        axes = (axis,) if isinstance(axis, int) else axis
        axes = [ax % len(shape) for ax in axes]
        return tuple(extent for i, extent in enumerate(shape) if i not in axes)

    def _keep_shape(self):
        axis = self.attrs.get("axis")
        if axis is None:
            return (1,) * len(self.shape)
        axes = (axis,) if isinstance(axis, int) else axis
        axes = [ax % len(self.shape) for ax in axes]
        return tuple(1 if i in axes else extent for i, extent in enumerate(self.shape))

    def backward(self, grad):
        return (np.broadcast_to(grad.reshape(self._keep_shape()), self.shape).copy(),)


@register(OpKind.MEAN)
class Mean(Sum):
    def forward(self, a):
        out = Sum.forward(self, a)
        self.count = a.size // max(out.size, 1)
        return (out / self.count).astype(a.dtype)

    def backward(self, grad):
        (full,) = Sum.backward(self, grad)
        return (full / full.dtype.type(self.count),)


@register(OpKind.AVGPOOL)
class AvgPool2d(Function):
    """Non-overlapping average pooling with a square window"""

    def check(self, x):
        size = self.attrs["size"]
        if x.ndim != 4 or x.shape[2] % size or x.shape[3] % size:
            raise ShapeError(self.kind.value, x.shape, (size, size))

    def forward(self, x):
        size = self.attrs["size"]
        batch, channels, height, width = x.shape
        self.shape = x.shape
        tiles = x.reshape(batch, channels, height // size, size, width // size, size)
        return tiles.mean(axis=(3, 5))

    def backward(self, grad):
        size = self.attrs["size"]
        spread = np.repeat(np.repeat(grad, size, axis=2), size, axis=3)
        return (spread / grad.dtype.type(size * size),)


@register(OpKind.DOWNSAMPLE_PAD)
class DownsamplePad(Function):
    """Parameter-free residual shortcut: stride-2 subsample, zero-pad channels"""

    def check(self, x):
        if x.ndim != 4 or self.attrs["channels"] < x.shape[1]:
            raise ShapeError(self.kind.value, x.shape, (self.attrs["channels"],))

    def forward(self, x):
        self.shape = x.shape
        sub = x[:, :, ::2, ::2]
        extra = self.attrs["channels"] - x.shape[1]
        self.before = extra // 2
        return np.pad(sub, ((0, 0), (self.before, extra - self.before), (0, 0), (0, 0)))

    def backward(self, grad):
        out = np.zeros(self.shape, dtype=grad.dtype)
        out[:, :, ::2, ::2] = grad[:, self.before : self.before + self.shape[1]]
        return (out,)
