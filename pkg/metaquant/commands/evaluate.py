"""
Re-evaluate a finished run
"""

import logging
import os

from metaquant.core.command import Command
from metaquant.core.config.experiment import ExperimentConfig, model_spec
from metaquant.core.exceptions import ConfigError
from metaquant.core.train.runner import eval_accuracy, load_datasets, load_run
from metaquant.core.util.fmt import format_accuracy
from metaquant.lib.autodiff.tensor import precision
from metaquant.lib.models import build_model

LOG = logging.getLogger(__name__)


class Evaluate(Command):
    """Rebuild the model of a run from its experiment.conf and weights.npz
    and report its test accuracy.
    """

    name = "eval"
    aliases = ["ev"]
    description = "Evaluate the saved model of a run"

    args = [["--run"], ["--batch-size"]]
    kargs = [
        {"metavar": "DIR", "required": True, "help": "Run directory"},
        {"type": int, "default": None, "help": "Evaluation batch size"},
    ]

    def run(self, cmd, opts, *args):
        run = load_run(opts.run)
        if not os.path.exists(run.weights_path):
            raise ConfigError("Run %s has no saved weights" % run.path)
        config = ExperimentConfig(run.experiment_path)
        batch_size = opts.batch_size or config["schedule"]["eval_batch_size"]
        with precision(config["schedule"]["precision"]):
            train, test = load_datasets(config)
            model = build_model(model_spec(config, train), config["seed"])
            model.load_state(run.load_arrays(run.weights_path))
            accuracy = eval_accuracy(model, test, batch_size)
        print("%s: test accuracy %s" % (run.path, format_accuracy(accuracy)))
        recorded = run.summary["final_accuracy"]
        if recorded is not None and recorded != accuracy:
            LOG.warning(
                "Recorded accuracy %s differs from %s",
                format_accuracy(recorded),
                format_accuracy(accuracy),
            )
        return 0
