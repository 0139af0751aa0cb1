"""
Shared hypernetwork plumbing

A calibration network f_psi runs coordinate-wise: the N elements of a layer's
weight and gradient are N independent batch rows, so one parameter set
serves every layer regardless of its size.  The meta-quantizer is the
calibration network followed by the gradient quantizer Q.
"""

import collections
import logging

import numpy as np

from metaquant.core.exceptions import ShapeError
from metaquant.core.plugin import load_hypernet_design
from metaquant.lib.autodiff import functional as F
from metaquant.lib.autodiff.tape import GraphNode, constant, leaf
from metaquant.lib.autodiff.tensor import as_tensor
from metaquant.lib.quant import fake_quantize

LOG = logging.getLogger(__name__)

INPUT_SCALES = ("none", "max-abs")


class FlattenedPair(object):
    """A layer's gradient and weight as N x 1 columns

    :attribute grad: constant node (the detached gradient)
    :attribute weight: node; constant unless the weight history is kept
    :attribute shape: the layer's original tensor shape
    """

    def __init__(self, grad, weight, shape):
        self.grad = grad
        self.weight = weight
        self.shape = tuple(shape)

    @property
    def size(self):
        return self.grad.shape[0]


def flatten_for_hypernet(grad, weight):
    """Reshape ``grad``/``weight`` to row-major N x 1 columns

    ``grad`` is always taken as a constant.  ``weight`` may be a node, in
    which case the reshape is recorded so gradient can reach its history.
    """
    grad_value = grad.value if isinstance(grad, GraphNode) else as_tensor(grad)
    weight_shape = weight.shape if isinstance(weight, GraphNode) else np.shape(weight)
    if grad_value.shape != tuple(weight_shape):
        raise ShapeError("flatten-for-hypernet", grad_value.shape, weight_shape)
    size = int(np.prod(grad_value.shape, dtype=np.int64))
    grad_col = constant(grad_value.reshape(size, 1))
    if isinstance(weight, GraphNode) and weight.requires_grad:
        weight_col = F.reshape(weight, (size, 1))
    else:
        value = weight.value if isinstance(weight, GraphNode) else as_tensor(weight)
        weight_col = constant(value.reshape(size, 1))
    return FlattenedPair(grad_col, weight_col, grad_value.shape)


def unflatten(column, shape):
    """Inverse of flatten_for_hypernet for a node or an array"""
    if isinstance(column, GraphNode):
        return F.reshape(column, shape)
    return np.asarray(column).reshape(shape)


class RecurrentState(object):
    """Per-coordinate LSTM hidden and cell arrays (N x H), or empty"""

    def __init__(self, hidden=None, cell=None):
        self.hidden = hidden
        self.cell = cell

    @property
    def empty(self):
        return self.hidden is None

    def resolve(self, size, width, dtype):
        """(hidden, cell) arrays for ``size`` coordinates, zeros if stale"""
        if self.empty or self.hidden.shape != (size, width):
            zeros = np.zeros((size, width), dtype=dtype)
            return zeros, zeros
        return self.hidden.astype(dtype), self.cell.astype(dtype)

    def update(self, hidden, cell):
        self.hidden = np.array(hidden.value, copy=True)
        self.cell = np.array(cell.value, copy=True)

    def reset(self):
        self.hidden = self.cell = None


class HyperNetDesign(object):
    """Base class for calibration network designs

    Subclasses set ``name`` and implement ``init_params`` and ``calibrate``.
    """

    name = None
    description = ""
    recurrent = False
    default_fc_layers = 1

    def __init__(self, hidden, fc_layers=None):
        if hidden < 1:
            raise ValueError("hidden width must be >= 1, got %r" % hidden)
        self.hidden = int(hidden)
        self.fc_layers = int(fc_layers or self.default_fc_layers)

    def init_params(self, rng):
        """Ordered mapping name -> initial array"""
        raise NotImplementedError()

    def calibrate(self, pair, grad, params, state):
        """f_psi over ``pair``; ``grad`` is the (possibly rescaled) gradient column"""
        raise NotImplementedError()


class HyperNetParams(object):
    """psi: the single parameter set shared by every layer

    The leaves are created once and updated in place, so every layer's
    meta-quantization refers to the same objects for the whole run.
    """

    def __init__(self, design, leaves, residual=False, input_scale="none"):
        if input_scale not in INPUT_SCALES:
            raise ValueError("input_scale must be one of %s" % ", ".join(INPUT_SCALES))
        self.design = design
        self.leaves = leaves
        self.residual = bool(residual)
        self.input_scale = input_scale

    @property
    def name(self):
        return self.design.name

    @property
    def hidden(self):
        return self.design.hidden

    def __getitem__(self, key):
        return self.leaves[key]

    def __iter__(self):
        return iter(self.leaves.values())

    def count(self):
        """Total number of scalar parameters"""
        return int(sum(node.value.size for node in self.leaves.values()))

    def values(self):
        """Snapshot name -> array copy"""
        return collections.OrderedDict(
            (name, node.value.copy()) for name, node in self.leaves.items()
        )

    def assign(self, name, value):
        """Replace the value held by leaf ``name`` (same object, new array)"""
        node = self.leaves[name]
        value = as_tensor(value, dtype=node.value.dtype)
        if value.shape != node.value.shape:
            raise ShapeError("assign", node.value.shape, value.shape)
        node.value = value

    def load(self, arrays):
        for name, value in arrays.items():
            self.assign(name, value)

    def __repr__(self):
        return "HyperNetParams(%s, H=%d, %d params)" % (self.name, self.hidden, self.count())


def init_hypernet(design, hidden, seed, fc_layers=None, residual=False, input_scale="none"):
    """Create psi for ``design`` (a registered design name)

    :returns: HyperNetParams
    """
    design_cls = load_hypernet_design(design)
    instance = design_cls(hidden, fc_layers=fc_layers)
    rng = np.random.RandomState(seed)
    leaves = collections.OrderedDict(
        (name, leaf(value, name="psi.%s" % name))
        for name, value in instance.init_params(rng).items()
    )
    params = HyperNetParams(instance, leaves, residual=residual, input_scale=input_scale)
    LOG.debug("Initialized %r", params)
    return params


def fc_stack(x, params, prefix, count):
    """``count`` affine layers with tanh between them"""
    for idx in range(count):
        weight = params["%s%d.weight" % (prefix, idx)]
        x = F.add(F.matmul(x, weight), params["%s%d.bias" % (prefix, idx)])
        if idx < count - 1:
            x = F.tanh(x)
    return x


def init_fc_stack(rng, prefix, widths, final_bias, final_std, gain=1.0):
    """Arrays for an FC stack of ``widths`` (input, hidden..., output)"""
    out = collections.OrderedDict()
    last = len(widths) - 2
    for idx, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        if idx == last:
            weight = rng.normal(0.0, final_std, size=(fan_in, fan_out))
            bias = np.full((fan_out,), final_bias)
        else:
            weight = rng.normal(0.0, gain / np.sqrt(fan_in), size=(fan_in, fan_out))
            bias = np.zeros((fan_out,))
        out["%s%d.weight" % (prefix, idx)] = weight
        out["%s%d.bias" % (prefix, idx)] = bias
    return out


def init_lstm_cell(rng, prefix, in_features, hidden, gain):
    """Combined gate weights ((in + H) x 4H) and bias (4H)"""
    fan_in = in_features + hidden
    return collections.OrderedDict(
        [
            (
                "%s.weight" % prefix,
                rng.normal(0.0, gain / np.sqrt(fan_in), size=(fan_in, 4 * hidden)),
            ),
            ("%s.bias" % prefix, np.zeros((4 * hidden,))),
        ]
    )


def lstm_cell(x, params, prefix, hidden, state):
    """One LSTM step over N independent rows

    Gate order in the combined weight: input, forget, output, candidate.

    :returns: (hidden node, cell node)
    """
    size = x.shape[0]
    h_prev, c_prev = state.resolve(size, hidden, x.value.dtype)
    joined = F.concat([x, constant(h_prev)], axis=-1)
    gates = F.add(F.matmul(joined, params["%s.weight" % prefix]), params["%s.bias" % prefix])
    in_gate = F.sigmoid(F.slice_last(gates, 0, hidden))
    forget_gate = F.sigmoid(F.slice_last(gates, hidden, 2 * hidden))
    out_gate = F.sigmoid(F.slice_last(gates, 2 * hidden, 3 * hidden))
    candidate = F.tanh(F.slice_last(gates, 3 * hidden, 4 * hidden))
    cell = F.add(F.mul(forget_gate, c_prev), F.mul(in_gate, candidate))
    return F.mul(out_gate, F.tanh(cell)), cell


def hypernet_apply(pair, params, cfg, state=None):
    """f_phi = Q(f_psi(pair)): calibrate first, quantize last

    :param cfg: QuantConfig for the gradient; ``cfg.bypass`` skips Q
    :param state: RecurrentState for the recurrent designs
    :returns: N x 1 node whose values lie on the (c, B) grid
    """
    if state is None:
        state = RecurrentState()
    grad = pair.grad
    factor = 1.0
    if params.input_scale == "max-abs":
        peak = float(np.abs(grad.value).max()) if grad.value.size else 0.0
        if peak > 0:
            factor = peak
            grad = constant(grad.value / grad.value.dtype.type(peak))
    out = params.design.calibrate(pair, grad, params, state)
    if factor != 1.0:
        out = F.scale(out, factor)
    if params.residual:
        out = F.add(out, pair.grad)
    if cfg.bypass:
        return out
    quantized = fake_quantize(out, cfg)
    if not np.any(out.value):
        LOG.debug("Degenerate all-zero calibration output for shape %s", pair.shape)
    return quantized
