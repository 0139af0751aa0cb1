"""
Experiment configuration

An experiment file is UTF-8 ``key = value`` text with ``#`` comments.  Keys
may be written dotted (``quant.grad_bits = 4``) or inside ``[quant]``
sections; dashes in keys are read as underscores.
"""

import logging

import numpy as np
from configobj import Section

from metaquant.core.exceptions import ConfigError, QuantizationError
from metaquant.core.train.optim import OptimizerConfig
from metaquant.lib.models import ModelSpec
from metaquant.lib.quant import QuantConfig

from .config import BaseConfig, prune_none

LOG = logging.getLogger(__name__)

EXPERIMENT_CONFIGSPEC = """
# meta: hypernetwork meta-quantized gradients
# plain: fixed quantizer on gradients
# fp: full-precision gradients
mode                = option(meta, plain, fp, default=meta)
seed                = integer(min=0, default=0)

[model]
arch                = option(mlp, small-cnn, mini-resnet, default=mlp)
# mlp hidden widths; input and output widths come from the dataset
widths              = coerced_int_list(default=list(64))
channels            = coerced_int_list(default=list(16, 32))
fc_width            = integer(min=1, default=64)
blocks              = coerced_int_list(default=list(3, 3, 3))
stage_widths        = coerced_int_list(default=list(16, 32, 64))
skip_first_last     = boolean(default=yes)

[data]
source              = option(synthetic, idx, cifar10, default=synthetic)
kind                = option(two-gaussians, ring, default=two-gaussians)
train_size          = integer(min=2, default=1000)
test_size           = integer(min=2, default=500)
train_images        = string(default=None)
train_labels        = string(default=None)
test_images         = string(default=None)
test_labels         = string(default=None)
train_files         = coerced_list(default=list())
test_files          = coerced_list(default=list())
subset              = integer(min=1, default=None)
num_classes         = integer(min=2, default=10)

[quant]
weight_bits         = forward_bits(default=32)
act_bits            = forward_bits(default=32)
grad_bits           = integer(min=2, max=16, default=8)
clip                = clip_policy(default=max-abs)
eps_floor           = float(min=0, default=1e-12)
error_signal        = boolean(default=no)

[hypernet]
design              = string(default=duallstmfc)
hidden              = integer(min=1, default=11)
fc_layers           = integer(min=1, default=None)
residual            = boolean(default=no)
persistent_state    = boolean(default=no)
input_scale         = option(none, max-abs, default=none)
bypass_quantizer    = boolean(default=no)
seed                = integer(min=0, default=None)

[optimizer]
kind                = option(sgd, momentum, adam, default=momentum)
lr                  = float(min=0, default=0.01)
momentum            = float(min=0, max=0.999999, default=0.9)
beta1               = float(min=0, max=0.999999, default=0.9)
beta2               = float(min=0, max=0.999999, default=0.999)
eps                 = float(min=0, default=1e-8)
lr_decay            = float(min=0, default=0.0)
weight_decay        = float(min=0, default=0.0)
psi_lr              = float(min=0, default=0.001)

[schedule]
epochs              = integer(min=1, default=1)
batch_size          = integer(min=1, default=32)
# iterations between evaluations, 0 means once per epoch
eval_every          = integer(min=0, default=0)
# stop after this many iterations, 0 means no limit
max_steps           = integer(min=0, default=0)
eval_batch_size     = integer(min=1, default=256)
precision           = option(fp32, fp64, default=fp32)
debug               = boolean(default=no)

[output]
directory           = string(default=None)
reference_run       = string(default=None)
record_wall_clock   = boolean(default=no)
save_weights        = boolean(default=yes)

[meta]
# feed the hypernetwork a weight cut from its history (normal) or not
detach              = boolean(default=yes)
""".splitlines()

# command line flag -> dotted key
FLAG_KEYS = {
    "grad_bits": "quant.grad_bits",
    "weight_bits": "quant.weight_bits",
    "act_bits": "quant.act_bits",
    "mode": "mode",
    "design": "hypernet.design",
    "epochs": "schedule.epochs",
    "batch_size": "schedule.batch_size",
    "lr": "optimizer.lr",
    "seed": "seed",
    "out": "output.directory",
}


def _split_key(key):
    return key.replace("-", "_").split(".", 1)


def _assign(config, key, value):
    """Set dotted ``key`` on ``config``, creating the section if needed"""
    parts = _split_key(key)
    if len(parts) == 1:
        config[parts[0]] = value
        return
    section, name = parts
    if section not in config:
        config[section] = {}
    elif not isinstance(config[section], Section):
        raise ConfigError("'%s' is a value, not a section" % section)
    config[section][name] = value


class ExperimentConfig(BaseConfig):
    """A validated experiment description

    :param source: path, list of lines or dict; None for all defaults
    :param overrides: dotted key -> value applied before validation
    """

    def __init__(self, source=None, overrides=None):
        BaseConfig.__init__(self, source, file_error=True)
        self._fold_dotted()
        for key, value in (overrides or {}).items():
            if value is not None:
                _assign(self, key, value)
        if self.get("mode", "meta") == "meta" and "hypernet" not in self:
            raise ConfigError("mode=meta requires a hypernet section")
        self.validate_config(EXPERIMENT_CONFIGSPEC, strict=True)
        LOG.debug(
            "Experiment config %s: mode=%s seed=%s", self.filename, self["mode"], self["seed"]
        )

    def _fold_dotted(self):
        for key in list(self.scalars):
            if "." in key:
                value = self.pop(key)
                _assign(self, key, value)

    def snapshot(self, path):
        """Write the validated config to ``path``, leaving unset keys out"""
        out = BaseConfig(None)
        out.merge(prune_none(self.dict()))
        out.filename = path
        out.write()
        return path


def parse_overrides(pairs):
    """['quant.grad_bits=4', ...] -> {'quant.grad_bits': '4'}

    :raises: ConfigError for an item without '='
    """
    overrides = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError("Override %r is not key=value" % item)
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def parse_config(path=None, flags=None, overrides=None):
    """Read, override and validate an experiment config

    :param flags: mapping of FLAG_KEYS names to values (None = not given)
    :param overrides: ``key=value`` strings from ``--set``
    :returns: ExperimentConfig
    :raises: ConfigError
    """
    merged = parse_overrides(overrides)
    for flag, key in FLAG_KEYS.items():
        value = (flags or {}).get(flag)
        if value is not None:
            merged[key] = str(value)
    try:
        return ExperimentConfig(path, merged)
    except (IOError, OSError) as ex:
        raise ConfigError("Failed to read experiment config %s: %s" % (path, ex))


def quant_config(config, bypass=None):
    """QuantConfig for gradients from the [quant] section"""
    section = config["quant"]
    if bypass is None:
        bypass = config["hypernet"]["bypass_quantizer"]
    try:
        return QuantConfig(
            section["grad_bits"], section["clip"], section["eps_floor"], bypass=bypass
        )
    except QuantizationError as exc:
        raise ConfigError("quant: %s" % exc)


def error_signal_config(config):
    """QuantConfig for error signals, or None when they stay full precision"""
    section = config["quant"]
    if not section["error_signal"] or config["mode"] == "fp":
        return None
    try:
        return QuantConfig(section["grad_bits"], section["clip"], section["eps_floor"])
    except QuantizationError as exc:
        raise ConfigError("quant.error_signal: %s" % exc)


def optimizer_config(config):
    """OptimizerConfig from the [optimizer] section"""
    return OptimizerConfig(**dict(config["optimizer"]))


def model_spec(config, dataset):
    """ModelSpec for the [model] section sized to ``dataset``"""
    section = config["model"]
    widths = None
    if section["arch"] == "mlp":
        features = int(np.prod(dataset.input_shape))
        widths = [features] + list(section["widths"]) + [dataset.num_classes]
    return ModelSpec(
        section["arch"],
        dataset.num_classes,
        dataset.input_shape,
        widths=widths,
        channels=section["channels"],
        fc_width=section["fc_width"],
        blocks=section["blocks"],
        stage_widths=section["stage_widths"],
        weight_bits=config["quant"]["weight_bits"],
        act_bits=config["quant"]["act_bits"],
        skip_first_last=section["skip_first_last"],
    )
