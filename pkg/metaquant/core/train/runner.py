"""
Run an experiment end to end

Builds the data, model and (in meta mode) the hypernetwork from a validated
ExperimentConfig, trains in the configured mode and records everything in
a run directory:

    experiment.conf  validated config snapshot
    metrics.csv      one row per evaluation
    run.conf         summary (final accuracy, delta vs a reference run)
    train.log        this run's log
    weights.npz      final model state
    hypernet.npz     final hypernetwork parameters (meta mode)
    abort.conf       diagnostics of a non-finite abort
"""

import collections
import csv
import logging
import time

import numpy as np

from metaquant.core.config.experiment import (
    error_signal_config,
    model_spec,
    optimizer_config,
    quant_config,
)
from metaquant.core.exceptions import (
    ConfigError,
    DataFormatError,
    NonFiniteError,
    TrainingAbort,
)
from metaquant.core.log import attach_run_log, detach_handler
from metaquant.core.plugin import PluginLoadError
from metaquant.core.spool import SPOOL
from metaquant.core.util.fmt import format_accuracy, format_delta, format_interval
from metaquant.core.util.lock import LockError
from metaquant.hypernet import init_hypernet
from metaquant.lib.autodiff.tensor import precision
from metaquant.lib.data import batch_iterator, load_cifar10_binary, load_idx, synthetic_dataset
from metaquant.lib.models import build_model

from .meta import TrainState, training_step

LOG = logging.getLogger(__name__)

CSV_COLUMNS = (
    "iteration",
    "epoch",
    "train_loss",
    "test_accuracy",
    "grad_mse",
    "grad_cosine",
    "wall_ms",
)


class MetricsRecord(object):
    """One evaluation point

    :attribute layer_metrics: layer name -> (mse, cosine) of the last step
    """

    def __init__(
        self,
        iteration,
        epoch,
        train_loss,
        test_accuracy,
        grad_mse,
        grad_cosine,
        layer_metrics=None,
        wall_ms=0,
    ):
        if not -1.0 <= grad_cosine <= 1.0:
            raise ValueError("cosine %r outside [-1, 1]" % grad_cosine)
        if not 0.0 <= test_accuracy <= 1.0:
            raise ValueError("accuracy %r outside [0, 1]" % test_accuracy)
        self.iteration = int(iteration)
        self.epoch = int(epoch)
        self.train_loss = float(train_loss)
        self.test_accuracy = float(test_accuracy)
        self.grad_mse = float(grad_mse)
        self.grad_cosine = float(grad_cosine)
        self.layer_metrics = layer_metrics or collections.OrderedDict()
        self.wall_ms = int(wall_ms)

    @staticmethod
    def header(layer_names):
        columns = list(CSV_COLUMNS)
        for name in layer_names:
            columns.extend(["mse:%s" % name, "cos:%s" % name])
        return columns

    def row(self):
        """CSV cells; floats use repr so rows reproduce exactly"""
        cells = [
            str(self.iteration),
            str(self.epoch),
            repr(self.train_loss),
            repr(self.test_accuracy),
            repr(self.grad_mse),
            repr(self.grad_cosine),
            str(self.wall_ms),
        ]
        for mse, cos in self.layer_metrics.values():
            cells.extend([repr(float(mse)), repr(float(cos))])
        return cells

    def __repr__(self):
        return "MetricsRecord(iteration=%d, loss=%.6f, accuracy=%s)" % (
            self.iteration,
            self.train_loss,
            format_accuracy(self.test_accuracy),
        )


def eval_accuracy(model, dataset, batch_size=256):
    """Fraction of argmax-correct predictions over ``dataset``

    :raises: ValueError for an empty dataset
    """
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty %s dataset" % dataset.split)
    logits = model.predict(dataset.images, batch_size=batch_size)
    correct = np.argmax(logits, axis=1) == dataset.labels
    return float(np.count_nonzero(correct)) / len(dataset)


def load_datasets(config):
    """(train, test) Datasets for the [data] section

    :raises: ConfigError for missing paths or unreadable files
    """
    data = config["data"]
    seed = config["seed"]
    source = data["source"]
    try:
        if source == "synthetic":
            train = synthetic_dataset(data["kind"], data["train_size"], [seed, 0], "train")
            test = synthetic_dataset(data["kind"], data["test_size"], [seed, 1], "test")
        elif source == "idx":
            keys = ("train_images", "train_labels", "test_images", "test_labels")
            paths = [data[key] for key in keys]
            if not all(paths):
                raise ConfigError("data.source = idx needs train/test image and label paths")
            train = load_idx(paths[0], paths[1], "train", data["subset"], data["num_classes"])
            test = load_idx(paths[2], paths[3], "test", None, data["num_classes"])
        else:
            if not data["train_files"] or not data["test_files"]:
                raise ConfigError("data.source = cifar10 needs train_files and test_files")
            train = load_cifar10_binary(data["train_files"], "train", limit=data["subset"])
            test = load_cifar10_binary(data["test_files"], "test", stats=train.channel_stats)
    except (IOError, OSError, DataFormatError) as exc:
        raise ConfigError("Failed to load %s data: %s" % (source, exc))
    if source == "synthetic" and data["subset"]:
        train = train.subset(data["subset"])
    if not len(train):
        raise ConfigError("training set is empty")
    LOG.info("Loaded %r and %r", train, test)
    return train, test


def build_hypernet(config):
    """HyperNetParams for the [hypernet] section"""
    section = config["hypernet"]
    seed = section["seed"] if section["seed"] is not None else config["seed"]
    try:
        return init_hypernet(
            section["design"],
            section["hidden"],
            seed,
            fc_layers=section["fc_layers"],
            residual=section["residual"],
            input_scale=section["input_scale"],
        )
    except PluginLoadError as exc:
        raise ConfigError("Unknown hypernetwork design %r: %s" % (section["design"], exc))


def build_train_state(config, train):
    """Model plus TrainState for ``config`` sized to ``train``"""
    mode = config["mode"]
    model = build_model(model_spec(config, train), config["seed"])
    model.error_cfg = error_signal_config(config)
    grad_cfg = None
    hypernet = None
    if mode == "meta":
        grad_cfg = quant_config(config)
        hypernet = build_hypernet(config)
        LOG.info("Hypernetwork %r", hypernet)
    elif mode == "plain":
        grad_cfg = quant_config(config, bypass=False)
    return TrainState(
        model,
        mode,
        optimizer_config(config),
        grad_cfg=grad_cfg,
        hypernet=hypernet,
        detach=config["meta"]["detach"],
        persistent_state=config["hypernet"]["persistent_state"],
        seed=config["seed"],
    )


def reference_accuracy(path, spool=None):
    """Final accuracy recorded by the completed run at ``path``

    :raises: ConfigError if there is no completed run with an accuracy
    """
    run = (spool or SPOOL).find_run(path)
    if run is None:
        raise ConfigError("Reference run %s not found" % path)
    summary = run.summary
    if summary["status"] != "completed" or summary["final_accuracy"] is None:
        raise ConfigError("Reference run %s did not complete" % path)
    return run.path, summary["final_accuracy"]


class ExperimentRunner(object):
    """
    Train and evaluate one experiment into a run directory

    Callbacks registered with ``register_cb`` are called as
    ``callback(event, run, *args)`` for the events before-run,
    after-eval (with the MetricsRecord), after-run and failed-run.
    """

    def __init__(self, spool=None):
        self.spool = spool or SPOOL
        self._registry = {}

    def register_cb(self, event, callback):
        self._registry.setdefault(event, []).append(callback)

    def apply_cb(self, event, *args):
        for callback in self._registry.get(event, []):
            callback(event, *args)

    def _open_run(self, config):
        directory = config["output"]["directory"]
        try:
            return self.spool.add_run(directory)
        except LockError as exc:
            raise ConfigError("Run directory is in use: %s" % exc.message)
        except (IOError, OSError) as exc:
            raise ConfigError("Cannot use output directory %s: %s" % (directory, exc))

    def run(self, config):
        """Run ``config``

        :returns: (final MetricsRecord, RunEntry)
        :raises: TrainingAbort on a non-finite loss, ConfigError
        """
        reference = None
        if config["output"]["reference_run"]:
            reference = reference_accuracy(config["output"]["reference_run"], self.spool)
        run = self._open_run(config)
        handler = attach_run_log(run.log_path)
        try:
            return self._run(config, run, reference), run
        finally:
            detach_handler(handler)
            run.release()

    def _run(self, config, run, reference):
        config.snapshot(run.experiment_path)
        summary = run.summary
        summary["mode"] = config["mode"]
        summary["seed"] = config["seed"]
        summary["status"] = "running"
        summary["start_time"] = time.time()
        run.flush()
        self.apply_cb("before-run", run)
        LOG.info("Starting %s run in %s", config["mode"], run.path)

        schedule = config["schedule"]
        state = None
        try:
            with precision(schedule["precision"], debug=schedule["debug"]):
                train, test = load_datasets(config)
                state = build_train_state(config, train)
                final = self._train(config, run, state, train, test)
        except (TrainingAbort, NonFiniteError) as exc:
            if isinstance(exc, NonFiniteError):
                diagnostics = dict(state.last_metrics) if state is not None else {}
                exc = TrainingAbort(str(exc), diagnostics)
            summary["status"] = "aborted"
            summary["stop_time"] = time.time()
            if state is not None:
                summary["iterations"] = state.iteration
            run.write_abort(exc.message, exc.diagnostics)
            run.flush()
            self.apply_cb("failed-run", run)
            raise exc

        summary["status"] = "completed"
        summary["stop_time"] = time.time()
        summary["iterations"] = state.iteration
        summary["epochs"] = state.epoch + 1
        summary["final_train_loss"] = final.train_loss
        summary["final_accuracy"] = final.test_accuracy
        if reference is not None:
            summary["reference_run"], summary["reference_accuracy"] = reference
            summary["delta"] = final.test_accuracy - reference[1]
        if config["output"]["save_weights"]:
            run.save_arrays(run.weights_path, state.model.state_dict())
            if state.hypernet is not None:
                run.save_arrays(run.hypernet_path, state.hypernet.values())
        run.flush()
        LOG.info(
            "Run completed in %s: accuracy %s, delta %s",
            format_interval(summary["stop_time"] - summary["start_time"]),
            format_accuracy(final.test_accuracy),
            format_delta(summary["delta"]),
        )
        self.apply_cb("after-run", run)
        return final

    def _train(self, config, run, state, train, test):
        schedule = config["schedule"]
        eval_every = schedule["eval_every"]
        max_steps = schedule["max_steps"]
        record_clock = config["output"]["record_wall_clock"]
        started = time.time()
        losses = []
        last = None
        final = None

        with open(run.metrics_path, "w") as fileobj:
            writer = csv.writer(fileobj, lineterminator="\n")
            writer.writerow(MetricsRecord.header(state.layers.keys()))

            def evaluate():
                accuracy = eval_accuracy(state.model, test, schedule["eval_batch_size"])
                wall_ms = int(round((time.time() - started) * 1000)) if record_clock else 0
                record = MetricsRecord(
                    state.iteration,
                    state.epoch,
                    np.mean(losses),
                    accuracy,
                    last.grad_mse,
                    last.grad_cosine,
                    collections.OrderedDict(last.layer_metrics),
                    wall_ms,
                )
                writer.writerow(record.row())
                fileobj.flush()
                del losses[:]
                LOG.info(
                    "iteration %d epoch %d: loss %.6f accuracy %s",
                    record.iteration,
                    record.epoch,
                    record.train_loss,
                    format_accuracy(record.test_accuracy),
                )
                self.apply_cb("after-eval", run, record)
                return record

            done = False
            for epoch in range(schedule["epochs"]):
                state.epoch = epoch
                batches = batch_iterator(train, schedule["batch_size"], config["seed"], epoch)
                for images, labels in batches:
                    last = training_step(state, images, labels)
                    losses.append(last.loss)
                    if eval_every and state.iteration % eval_every == 0:
                        final = evaluate()
                    if max_steps and state.iteration >= max_steps:
                        done = True
                        break
                # epoch end, unless the last iteration was just evaluated
                if losses:
                    final = evaluate()
                if done:
                    break
        return final


def run_experiment(config, spool=None):
    """Train and evaluate ``config``

    :returns: (final MetricsRecord, RunEntry)
    """
    return ExperimentRunner(spool).run(config)


def load_run(path, spool=None):
    """RunEntry for an existing run directory

    :raises: ConfigError if ``path`` holds no run
    """
    run = (spool or SPOOL).find_run(path)
    if run is None:
        raise ConfigError("No run found at %s" % path)
    return run
