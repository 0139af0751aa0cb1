"""
Desk-scale model zoo

Three architectures: a plain MLP, a small CNN and a mini residual network
(ResNet-20 layout at reduced scale).  Every conv/FC layer is "quantizable":
its weight is the latent full-precision tensor W, quantized on the fly in
the forward pass when weight bits < 32.  Biases and normalization
parameters always stay full precision.
"""

import collections
import logging

import numpy as np

from metaquant.core.exceptions import ConfigError
from metaquant.lib.autodiff import functional as F
from metaquant.lib.autodiff.tape import Tape, constant, leaf
from metaquant.lib.autodiff.tensor import as_tensor
from metaquant.lib.quant import (
    FULL_PRECISION_BITS,
    dorefa_activation_quantize,
    dorefa_weight_quantize,
    error_signal_quantize,
)

LOG = logging.getLogger(__name__)

ARCHITECTURES = ("mlp", "small-cnn", "mini-resnet")

BN_MOMENTUM = 0.1
BN_EPS = 1e-5


class ModelSpec(object):
    """Architecture plus per-layer quantization flags

    :param arch: one of ARCHITECTURES
    :param widths: mlp layer widths including input and output
    :param channels: small-cnn conv channels
    :param fc_width: small-cnn hidden FC width
    :param blocks: mini-resnet residual blocks per stage
    :param stage_widths: mini-resnet channels per stage
    :param skip_first_last: leave first/last layer weights unquantized
    """

    def __init__(
        self,
        arch,
        num_classes,
        input_shape,
        widths=None,
        channels=(16, 32),
        fc_width=64,
        blocks=(3, 3, 3),
        stage_widths=(16, 32, 64),
        weight_bits=FULL_PRECISION_BITS,
        act_bits=FULL_PRECISION_BITS,
        skip_first_last=True,
    ):
        self.arch = arch
        self.num_classes = int(num_classes)
        self.input_shape = tuple(int(x) for x in input_shape)
        self.widths = [int(x) for x in widths] if widths else None
        self.channels = tuple(int(x) for x in channels)
        self.fc_width = int(fc_width)
        self.blocks = tuple(int(x) for x in blocks)
        self.stage_widths = tuple(int(x) for x in stage_widths)
        self.weight_bits = int(weight_bits)
        self.act_bits = int(act_bits)
        self.skip_first_last = bool(skip_first_last)
        self.check()

    def check(self):
        """Raise ConfigError for an unusable spec"""
        if self.arch not in ARCHITECTURES:
            raise ConfigError(
                "Unknown architecture %r (expected one of %s)"
                % (self.arch, ", ".join(ARCHITECTURES))
            )
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.arch == "mlp":
            if not self.widths or len(self.widths) < 2 or min(self.widths) < 1:
                raise ConfigError(
                    "mlp needs at least two positive layer widths, got %r" % self.widths
                )
            if self.widths[-1] != self.num_classes:
                raise ConfigError(
                    "mlp output width %d does not match %d classes"
                    % (self.widths[-1], self.num_classes)
                )
            if self.widths[0] != int(np.prod(self.input_shape)):
                raise ConfigError(
                    "mlp input width %d does not match input shape %s"
                    % (self.widths[0], self.input_shape)
                )
            return
        if len(self.input_shape) != 3:
            raise ConfigError(
                "%s needs (channels, height, width) input, got %s" % (self.arch, self.input_shape)
            )
        if self.arch == "small-cnn":
            if len(self.channels) != 2 or min(self.channels) < 1 or self.fc_width < 1:
                raise ConfigError("small-cnn needs two positive channel counts and fc width")
            if self.input_shape[1] % 4 or self.input_shape[2] % 4:
                raise ConfigError("small-cnn input height/width must be divisible by 4")
        else:
            if not self.blocks or min(self.blocks) < 1:
                raise ConfigError("mini-resnet needs >= 1 block per stage, got %r" % (self.blocks,))
            if len(self.stage_widths) != len(self.blocks) or min(self.stage_widths) < 1:
                raise ConfigError("mini-resnet needs one positive width per stage")
            if any(b < a for a, b in zip(self.stage_widths, self.stage_widths[1:])):
                raise ConfigError("mini-resnet stage widths must not decrease")
            reduction = 2 ** (len(self.blocks) - 1)
            if self.input_shape[1] % reduction or self.input_shape[2] % reduction:
                raise ConfigError(
                    "mini-resnet input height/width must be divisible by %d" % reduction
                )

    def __repr__(self):
        return "ModelSpec(%s, classes=%d, W%d/A%d)" % (
            self.arch,
            self.num_classes,
            self.weight_bits,
            self.act_bits,
        )


def he_normal(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class Linear(object):
    """y = x @ W + b with W of shape (in, out)"""

    kind = "fc"

    def __init__(self, name, in_features, out_features, rng):
        self.name = name
        self.weight = leaf(he_normal(rng, (in_features, out_features), in_features), name=name)
        self.bias = leaf(np.zeros(out_features), name=name + ".bias")
        self.weight_bits = FULL_PRECISION_BITS

    def forward(self, x):
        weight = dorefa_weight_quantize(self.weight, self.weight_bits)
        return F.add(F.matmul(x, weight), self.bias)

    def parameters(self):
        return [(self.name + ".bias", self.bias)]


class Conv2d(object):
    """Square-kernel convolution, weights (out, in, k, k)"""

    kind = "conv"

    def __init__(
        self, name, in_channels, out_channels, size, rng, stride=1, padding=None, bias=True
    ):
        self.name = name
        fan_in = in_channels * size * size
        self.weight = leaf(
            he_normal(rng, (out_channels, in_channels, size, size), fan_in), name=name
        )
        self.bias = leaf(np.zeros((1, out_channels, 1, 1)), name=name + ".bias") if bias else None
        self.stride = stride
        self.padding = size // 2 if padding is None else padding
        self.weight_bits = FULL_PRECISION_BITS

    def forward(self, x):
        weight = dorefa_weight_quantize(self.weight, self.weight_bits)
        out = F.conv2d(x, weight, stride=self.stride, padding=self.padding)
        if self.bias is not None:
            out = F.add(out, self.bias)
        return out

    def parameters(self):
        if self.bias is None:
            return []
        return [(self.name + ".bias", self.bias)]


class BatchNorm2d(object):
    """Per-channel normalization with running statistics

    In training the running mean/variance are first updated from the batch
    and then used for normalization; they are constants to autodiff.
    """

    kind = "bn"

    def __init__(self, name, channels):
        self.name = name
        self.gamma = leaf(np.ones(channels), name=name + ".gamma")
        self.beta = leaf(np.zeros(channels), name=name + ".beta")
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def forward(self, x, training):
        if training:
            batch_mean = x.value.mean(axis=(0, 2, 3))
            batch_var = x.value.var(axis=(0, 2, 3))
            self.running_mean = (1 - BN_MOMENTUM) * self.running_mean + BN_MOMENTUM * batch_mean
            self.running_var = (1 - BN_MOMENTUM) * self.running_var + BN_MOMENTUM * batch_var
        channels = self.running_mean.shape[0]
        shape = (1, channels, 1, 1)
        inv_std = 1.0 / np.sqrt(self.running_var + BN_EPS)
        centered = F.sub(x, constant(self.running_mean.reshape(shape)))
        normed = F.mul(centered, constant(inv_std.reshape(shape)))
        return F.add(F.mul(normed, F.reshape(self.gamma, shape)), F.reshape(self.beta, shape))

    def parameters(self):
        return [(self.name + ".gamma", self.gamma), (self.name + ".beta", self.beta)]

    def buffers(self):
        return [
            (self.name + ".running_mean", "running_mean"),
            (self.name + ".running_var", "running_var"),
        ]


class ResidualBlock(object):
    """conv-bn-act-conv-bn plus shortcut, then act

    The shortcut is the identity, or a stride-2 subsample with zero-padded
    channels when the block changes resolution.
    """

    def __init__(self, name, in_channels, out_channels, stride, rng):
        self.name = name
        self.conv1 = Conv2d(
            name + ".conv1", in_channels, out_channels, 3, rng, stride=stride, bias=False
        )
        self.bn1 = BatchNorm2d(name + ".bn1", out_channels)
        self.conv2 = Conv2d(name + ".conv2", out_channels, out_channels, 3, rng, bias=False)
        self.bn2 = BatchNorm2d(name + ".bn2", out_channels)
        self.downsample = stride != 1 or in_channels != out_channels
        self.out_channels = out_channels

    def forward(self, x, model, training, branch=True):
        if self.downsample:
            shortcut = F.downsample_pad(x, self.out_channels)
        else:
            shortcut = x
        if not branch:
            return model.activation(shortcut)
        out = self.bn1.forward(self.conv1.forward(x), training)
        out = model.activation(out)
        out = self.bn2.forward(self.conv2.forward(out), training)
        return model.activation(F.add(out, shortcut))

    def layers(self):
        return [self.conv1, self.bn1, self.conv2, self.bn2]


class Model(object):
    """A built network

    :attribute quantizable: conv/FC layers in forward order
    :attribute error_cfg: QuantConfig for error-signal quantization or None
    """

    def __init__(self, spec, stem, blocks, head):
        self.spec = spec
        self.stem = stem
        self.blocks = blocks
        self.head = head
        self.error_cfg = None
        modules = list(stem)
        for block in blocks:
            modules.extend(block.layers())
        modules.extend(head)
        self.modules = modules
        self.quantizable = [m for m in modules if m.kind in ("fc", "conv")]
        self._apply_bits()

    def _apply_bits(self):
        last = len(self.quantizable) - 1
        for idx, layer in enumerate(self.quantizable):
            skip = self.spec.skip_first_last and idx in (0, last)
            layer.weight_bits = FULL_PRECISION_BITS if skip else self.spec.weight_bits

    def activation(self, x):
        if self.spec.act_bits < FULL_PRECISION_BITS:
            x = dorefa_activation_quantize(x, self.spec.act_bits)
        else:
            x = F.relu(x)
        return error_signal_quantize(x, self.error_cfg)

    def forward(self, inputs, training=False, residual_branches=True):
        """Logits node (batch, num_classes) for an input batch array

        ``residual_branches=False`` evaluates only the shortcut path of
        every residual block.
        """
        arch = self.spec.arch
        x = constant(inputs)
        if arch == "mlp":
            x = F.reshape(x, (x.shape[0], -1))
            for idx, layer in enumerate(self.head):
                x = layer.forward(x)
                if idx < len(self.head) - 1:
                    x = self.activation(x)
            return x
        if arch == "small-cnn":
            for conv in self.stem:
                x = F.avgpool2d(self.activation(conv.forward(x)), 2)
            x = F.flatten(x)
            x = self.activation(self.head[0].forward(x))
            return self.head[1].forward(x)
        conv, bn = self.stem
        x = self.activation(bn.forward(conv.forward(x), training))
        for block in self.blocks:
            x = block.forward(x, self, training, branch=residual_branches)
        x = F.mean(x, axis=(2, 3))
        return self.head[0].forward(x)

    def parameters(self):
        """Full-precision (name, leaf) pairs: biases and normalization"""
        params = []
        for module in self.modules:
            params.extend(module.parameters())
        return params

    def state_dict(self):
        """name -> array for every weight, parameter and running statistic"""
        state = collections.OrderedDict()
        for layer in self.quantizable:
            state[layer.name] = np.array(layer.weight.value, copy=True)
        for name, node in self.parameters():
            state[name] = np.array(node.value, copy=True)
        for module in self.modules:
            if module.kind == "bn":
                for name, attr in module.buffers():
                    state[name] = np.array(getattr(module, attr), copy=True)
        return state

    def load_state(self, state):
        """Replace all values from a ``state_dict`` mapping"""
        for layer in self.quantizable:
            layer.weight = leaf(state[layer.name], name=layer.name)
        for name, node in self.parameters():
            node.value = as_tensor(state[name])
        for module in self.modules:
            if module.kind == "bn":
                for name, attr in module.buffers():
                    setattr(module, attr, np.asarray(state[name], dtype=np.float64))

    def predict(self, images, batch_size=256):
        """Logits for ``images`` as an array, each batch on a scratch tape"""
        outputs = []
        for start in range(0, len(images), batch_size):
            with Tape("predict"):
                outputs.append(self.forward(images[start : start + batch_size]).value)
        if not outputs:
            return np.zeros((0, self.spec.num_classes))
        return np.concatenate(outputs, axis=0)

    def __repr__(self):
        return "<Model %s, %d quantizable layers>" % (self.spec.arch, len(self.quantizable))


def build_model(spec, seed):
    """Instantiate ``spec`` with He-initialized weights drawn from ``seed``"""
    spec.check()
    rng = np.random.RandomState(seed)
    stem, blocks, head = [], [], []
    if spec.arch == "mlp":
        for idx, (fan_in, fan_out) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
            head.append(Linear("fc%d" % idx, fan_in, fan_out, rng))
    elif spec.arch == "small-cnn":
        channels, height, width = spec.input_shape
        first, second = spec.channels
        stem.append(Conv2d("conv0", channels, first, 3, rng))
        stem.append(Conv2d("conv1", first, second, 3, rng))
        flat = second * (height // 4) * (width // 4)
        head.append(Linear("fc0", flat, spec.fc_width, rng))
        head.append(Linear("fc1", spec.fc_width, spec.num_classes, rng))
    else:
        channels = spec.input_shape[0]
        width = spec.stage_widths[0]
        stem.append(Conv2d("conv0", channels, width, 3, rng, bias=False))
        stem.append(BatchNorm2d("bn0", width))
        in_channels = width
        for stage, (count, out_channels) in enumerate(zip(spec.blocks, spec.stage_widths)):
            for idx in range(count):
                stride = 2 if stage > 0 and idx == 0 else 1
                name = "stage%d.block%d" % (stage + 1, idx)
                blocks.append(ResidualBlock(name, in_channels, out_channels, stride, rng))
                in_channels = out_channels
        head.append(Linear("fc", in_channels, spec.num_classes, rng))
    model = Model(spec, stem, blocks, head)
    LOG.debug("Built %r", model)
    return model
