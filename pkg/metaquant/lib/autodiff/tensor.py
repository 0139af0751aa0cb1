"""
Dense tensor helpers.

A tensor is a plain numpy array; this module owns the working precision
(FP64 for finite-difference checks, FP32 for training) and the optional
non-finite value checks used in debug mode.
"""

import contextlib
import logging

import numpy as np

from metaquant.core.exceptions import NonFiniteError

LOG = logging.getLogger(__name__)

Tensor = np.ndarray

PRECISIONS = {
    "fp32": np.float32,
    "fp64": np.float64,
}

_STATE = {"dtype": np.float32, "debug": False}


def set_precision(name):
    """Select the working float type, one of 'fp32' or 'fp64'"""
    try:
        _STATE["dtype"] = PRECISIONS[name]
    except KeyError:
        raise ValueError(
            "Unknown precision %r (expected one of %s)" % (name, ", ".join(PRECISIONS))
        )
    LOG.debug("Working precision set to %s", name)


def get_dtype():
    """Current working float type"""
    return _STATE["dtype"]


def set_debug(enabled):
    """Enable or disable non-finite checks on every recorded value"""
    _STATE["debug"] = bool(enabled)


def debug_enabled():
    return _STATE["debug"]


@contextlib.contextmanager
def precision(name, debug=None):
    """Temporarily switch precision (and optionally debug checks)"""
    saved = dict(_STATE)
    set_precision(name)
    if debug is not None:
        set_debug(debug)
    try:
        yield
    finally:
        _STATE.update(saved)


def as_tensor(data, dtype=None):
    """Convert ``data`` to an array of the working precision"""
    return np.asarray(data, dtype=dtype or _STATE["dtype"])


def zeros(shape, dtype=None):
    return np.zeros(shape, dtype=dtype or _STATE["dtype"])


def check_finite(value, what):
    """Raise NonFiniteError if debug mode is on and ``value`` has NaN/Inf"""
    if _STATE["debug"] and not np.all(np.isfinite(value)):
        raise NonFiniteError("Non-finite value produced by %s" % what)
    return value
