"""
Compare gradient modes and hypernetwork designs over several seeds
"""

import collections
import csv
import logging
import os

import numpy as np

from metaquant.core.command import Command
from metaquant.core.config.experiment import parse_config
from metaquant.core.plugin import HYPERNET_GROUP, iter_plugins
from metaquant.core.spool import SPOOL, timestamp_dir
from metaquant.core.train.runner import run_experiment
from metaquant.core.util.fmt import format_accuracy, format_delta

LOG = logging.getLogger(__name__)

ABLATION_CSV = "ablation.csv"


def variants(designs):
    """(label, mode, design) for the fp and plain baselines and every design"""
    rows = [("fp", "fp", None), ("plain", "plain", None)]
    rows.extend(("meta:%s" % design, "meta", design) for design in designs)
    return rows


def summarize(accuracies):
    """label -> (mean, std, delta vs fp mean)"""
    summary = collections.OrderedDict()
    reference = float(np.mean(accuracies["fp"])) if accuracies.get("fp") else None
    for label, values in accuracies.items():
        mean = float(np.mean(values))
        delta = mean - reference if reference is not None else None
        summary[label] = (mean, float(np.std(values)), delta)
    return summary


def run_ablation(config_path, designs, seeds, bits, out, overrides=()):
    """Train every variant for every seed into ``out``

    :returns: label -> list of final test accuracies, in seed order
    """
    accuracies = collections.OrderedDict()
    for label, mode, design in variants(designs):
        accuracies[label] = []
        for seed in seeds:
            flags = {
                "mode": mode,
                "design": design,
                "seed": seed,
                "grad_bits": bits,
                "weight_bits": bits,
                "act_bits": bits,
                "out": os.path.join(out, "%s-seed%d" % (label.replace(":", "-"), seed)),
            }
            config = parse_config(config_path, flags, list(overrides))
            record, _ = run_experiment(config)
            LOG.info("%s seed %d: %s", label, seed, format_accuracy(record.test_accuracy))
            accuracies[label].append(record.test_accuracy)
    return accuracies


def write_summary(path, summary, accuracies, seeds):
    with open(path, "w") as fileobj:
        writer = csv.writer(fileobj, lineterminator="\n")
        writer.writerow(
            ["variant", "runs", "mean_accuracy", "std_accuracy", "delta_vs_fp"]
            + ["accuracy:seed%d" % seed for seed in seeds]
        )
        for label, (mean, std, delta) in summary.items():
            row = [label, len(accuracies[label]), repr(mean), repr(std)]
            row.append("" if delta is None else repr(delta))
            writer.writerow(row + [repr(value) for value in accuracies[label]])


class Ablation(Command):
    """Train the same config as a full-precision-gradient baseline, with
    plain low-bit gradients and with meta-quantized gradients for each
    hypernetwork design, over several seeds.  ``--bits`` sets weight,
    activation and gradient bit-widths together (4 for the INT4 comparison,
    8 for INT8).

    Prints mean/std test accuracy and the delta against the fp baseline per
    variant, and writes them to ablation.csv in the output directory.
    """

    name = "ablation"
    aliases = ["ab"]
    description = "Compare fp, plain and meta gradients over seeds"

    args = [["--config", "-C"], ["--seeds"], ["--bits"], ["--design"], ["--out"], ["--set"]]
    kargs = [
        {"metavar": "PATH", "required": True, "help": "Experiment config file"},
        {"type": int, "default": 3, "help": "Number of seeds (0 .. N-1)"},
        {"type": int, "default": 4, "help": "Weight, activation and gradient bit-width"},
        {"action": "append", "default": [], "help": "Design to include, may be repeated"},
        {"metavar": "DIR", "help": "Directory for the runs and ablation.csv"},
        {"action": "append", "metavar": "KEY=VALUE", "default": [], "help": "Config override"},
    ]

    def run(self, cmd, opts, *args):
        designs = opts.design or [name for name, _ in iter_plugins(HYPERNET_GROUP)]
        out = opts.out or os.path.join(SPOOL.path, "ablation_%s" % timestamp_dir())
        seeds = list(range(opts.seeds))
        accuracies = run_ablation(opts.config, designs, seeds, opts.bits, out, opts.set)
        summary = summarize(accuracies)
        print("%-20s %10s %10s %10s" % ("Variant", "Mean", "Std", "Delta"))
        print("-" * 54)
        for label, (mean, std, delta) in summary.items():
            print(
                "%-20s %10s %10s %10s"
                % (label, format_accuracy(mean), format_accuracy(std), format_delta(delta))
            )
        path = os.path.join(out, ABLATION_CSV)
        write_summary(path, summary, accuracies, seeds)
        print("Wrote %s" % path)
        return 0
