"""
Train one experiment
"""

import logging

from metaquant.core.command import Command
from metaquant.core.config.experiment import FLAG_KEYS, parse_config
from metaquant.core.train.runner import run_experiment
from metaquant.core.util.fmt import format_accuracy

LOG = logging.getLogger(__name__)


class Train(Command):
    """Train a model as described by an experiment config and record the
    run (config snapshot, metrics.csv, run.conf, weights) in a run directory.

    Command line flags override the matching config keys; any other key can
    be overridden with ``--set section.key=value``.
    """

    name = "train"
    aliases = ["tr"]
    description = "Train one experiment into a run directory"

    args = [
        ["--config", "-C"],
        ["--seed"],
        ["--out"],
        ["--mode"],
        ["--design"],
        ["--grad-bits"],
        ["--weight-bits"],
        ["--act-bits"],
        ["--epochs"],
        ["--batch-size"],
        ["--lr"],
        ["--set"],
    ]
    kargs = [
        {"metavar": "PATH", "help": "Experiment config file"},
        {"type": int, "help": "Random seed (seed)"},
        {"metavar": "DIR", "help": "Run directory (output.directory)"},
        {"choices": ["meta", "plain", "fp"], "help": "Gradient mode (mode)"},
        {"help": "Hypernetwork design (hypernet.design)"},
        {"type": int, "help": "Gradient bit-width (quant.grad_bits)"},
        {"type": int, "help": "Forward weight bit-width (quant.weight_bits)"},
        {"type": int, "help": "Forward activation bit-width (quant.act_bits)"},
        {"type": int, "help": "Number of epochs (schedule.epochs)"},
        {"type": int, "help": "Mini-batch size (schedule.batch_size)"},
        {"type": float, "help": "Learning rate (optimizer.lr)"},
        {
            "action": "append",
            "metavar": "KEY=VALUE",
            "default": [],
            "help": "Override any config key, may be repeated",
        },
    ]

    def run(self, cmd, opts, *args):
        flags = dict((name, getattr(opts, name, None)) for name in FLAG_KEYS)
        config = parse_config(opts.config, flags, opts.set)
        record, run = run_experiment(config)
        print(run)
        LOG.info(
            "Final test accuracy %s after %d iterations",
            format_accuracy(record.test_accuracy),
            record.iteration,
        )
        return 0
