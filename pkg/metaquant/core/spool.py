"""
Utilities to manage run directories
"""

import logging
import os
import time
from textwrap import dedent

import numpy as np

from metaquant.core.config import BaseConfig
from metaquant.core.config.config import prune_none
from metaquant.core.util.fmt import format_accuracy, format_delta, format_interval
from metaquant.core.util.lock import Lock

LOG = logging.getLogger(__name__)

RUN_CONF = "run.conf"
EXPERIMENT_CONF = "experiment.conf"
METRICS_CSV = "metrics.csv"
TRAIN_LOG = "train.log"
WEIGHTS = "weights.npz"
HYPERNET = "hypernet.npz"
ABORT_CONF = "abort.conf"


def timestamp_dir(when=None):
    """
    Returns a directory named after the specified time or
    the current time, if no specific time is given
    """
    if when is None:
        when = time.time()
    return time.strftime("%Y%m%d_%H%M%S", time.localtime(when))


class Spool(object):
    """
    A directory spool where runs are saved
    """

    def __init__(self, path=None):
        self.path = path or "runs"

    def add_run(self, directory=None):
        """
        Create a run directory.  ``directory`` is used as given, otherwise a
        timestamped directory is created under this spool.
        """
        if directory is None:
            name = timestamp_dir()
            directory = os.path.join(self.path, name)
            suffix = 1
            while os.path.exists(directory):
                directory = os.path.join(self.path, "%s_%d" % (name, suffix))
                suffix += 1
        run = RunEntry(directory)
        run.prepare()
        return run

    def find_run(self, path):
        """
        Find an existing run by directory.  Returns None if the directory
        holds no run.conf
        """
        for candidate in (path, os.path.join(self.path, path)):
            if os.path.exists(os.path.join(candidate, RUN_CONF)):
                return RunEntry(candidate)
        return None

    def list_runs(self, reverse=False):
        """
        Runs under this spool in lexicographical (creation) order
        """
        if not os.path.isdir(self.path):
            return []
        runs = [
            RunEntry(os.path.join(self.path, name))
            for name in sorted(os.listdir(self.path), reverse=reverse)
            if os.path.exists(os.path.join(self.path, name, RUN_CONF))
        ]
        return runs

    def __iter__(self):
        return iter(self.list_runs())


CONFIGSPEC = """
[metaquant:run]
mode                = string(default="")
status              = option(running, completed, aborted, default=running)
seed                = integer(default=0)
start_time          = float(default=0)
stop_time           = float(default=0)
iterations          = integer(min=0, default=0)
epochs              = integer(min=0, default=0)
final_train_loss    = float(default=None)
final_accuracy      = float(min=0, max=1, default=None)
reference_run       = string(default=None)
reference_accuracy  = float(min=0, max=1, default=None)
delta               = float(default=None)
""".splitlines()


class RunEntry(object):
    """
    One run directory: the config snapshot, metrics, summary, log and arrays
    """

    def __init__(self, path):
        self.path = path
        self.name = os.path.basename(os.path.normpath(path))
        self.lock = Lock(path) if os.path.isdir(path) else None
        config_path = self.join(RUN_CONF)
        self.config = BaseConfig({}, file_error=False)
        self.config.filename = config_path
        if os.path.exists(config_path):
            self.load_config()
        else:
            self.validate_config()

    def join(self, name):
        return os.path.join(self.path, name)

    experiment_path = property(lambda self: self.join(EXPERIMENT_CONF))
    metrics_path = property(lambda self: self.join(METRICS_CSV))
    log_path = property(lambda self: self.join(TRAIN_LOG))
    weights_path = property(lambda self: self.join(WEIGHTS))
    hypernet_path = property(lambda self: self.join(HYPERNET))
    abort_path = property(lambda self: self.join(ABORT_CONF))

    @property
    def summary(self):
        return self.config["metaquant:run"]

    def validate_config(self):
        """
        Validate configuration
        """
        self.config.validate_config(CONFIGSPEC, suppress_warnings=True)

    def load_config(self):
        """
        (Re)Load the summary for this run.
        """
        self.config.reload()
        self.validate_config()

    def exists(self):
        return os.path.exists(self.path)

    def prepare(self):
        """
        Create the run directory and take its lock

        :raises: IOError if the directory cannot be created,
                 LockError if another process writes the same run
        """
        if not os.path.isdir(self.path):
            os.makedirs(self.path)
            LOG.info("Creating run directory %s", self.path)
        if not os.access(self.path, os.W_OK):
            raise IOError("Run directory %s is not writable" % self.path)
        if self.lock is None:
            self.lock = Lock(self.path)
        self.lock.acquire()

    def release(self):
        if self.lock is not None and self.lock.is_locked():
            self.lock.release()

    def flush(self):
        """
        Write run.conf, leaving unset values out
        """
        out = BaseConfig(None)
        out.merge(prune_none(self.config.dict()))
        out.filename = self.config.filename
        LOG.debug("Writing out run summary to %s", out.filename)
        out.write()

    def write_abort(self, message, diagnostics):
        """Record the diagnostics of an aborted run in abort.conf"""
        out = BaseConfig(None)
        out["abort"] = {"message": message}
        for key, value in sorted(diagnostics.items()):
            out["abort"][str(key)] = repr(value) if isinstance(value, float) else str(value)
        out.filename = self.abort_path
        out.write()
        LOG.debug("Wrote abort diagnostics to %s", out.filename)

    def save_arrays(self, path, arrays):
        with open(path, "wb") as fileobj:
            np.savez(fileobj, **dict(arrays))

    def load_arrays(self, path):
        with np.load(path) as data:
            return dict((name, data[name]) for name in data.files)

    def __str__(self):
        summary = self.summary
        elapsed = max(summary["stop_time"] - summary["start_time"], 0)
        return dedent(
            """
        Run: %s
        mode:           %s
        status:         %s
        iterations:     %d
        duration:       %s
        final accuracy: %s
        delta vs fp:    %s
        """
        ).strip() % (
            self.path,
            summary["mode"],
            summary["status"],
            summary["iterations"],
            format_interval(elapsed),
            format_accuracy(summary["final_accuracy"]),
            format_delta(summary["delta"]),
        )

    __repr__ = __str__


SPOOL = Spool()
