"""
Extra check methods to work with
a validate.py Validator instance
"""

try:
    from configobj import validate
except ImportError:
    import validate

from metaquant.core.exceptions import QuantizationError
from metaquant.core.util.fmt import format_loglevel
from metaquant.lib.quant import FULL_PRECISION_BITS, ClipPolicy


def is_coerced_list(value, min_val=None, max_val=None):
    """
    Checks if a value is a list, if not coerces
    it to a list
    """
    if not isinstance(value, list):
        value = [value]
    return validate.is_list(value, min_val, max_val)


def is_coerced_int_list(value, min_val=None, max_val=None):
    """
    A list of integers; a single value becomes a one-element list
    """
    if not isinstance(value, list):
        value = [value] if str(value).strip() else []
    return validate.is_int_list(value, min_val, max_val)


def is_logging_level(value):
    """
    Coerces a string to an integer logging level which
    maps to a standard python logging level
    """
    try:
        level = format_loglevel(value)
    except Exception:
        raise validate.VdtTypeError(value)
    if level is None:
        raise validate.VdtValueError(value)
    return level


def is_clip_policy(value):
    """
    One of max-abs, percentile(p) or fixed(c); returns the canonical string
    """
    if isinstance(value, list):
        # configobj splits "fixed(1, 2)" style values on commas
        value = ",".join(value)
    try:
        return str(ClipPolicy.parse(value))
    except QuantizationError:
        raise validate.VdtValueError(value)


def is_forward_bits(value):
    """
    Forward-pass bit-width: 1..16, or 32 for full precision
    """
    bits = validate.is_integer(value, 1, FULL_PRECISION_BITS)
    if bits > 16 and bits != FULL_PRECISION_BITS:
        raise validate.VdtValueError(value)
    return bits


VALIDATOR = validate.Validator(
    {
        "logging_level": is_logging_level,
        "coerced_list": is_coerced_list,
        "coerced_int_list": is_coerced_int_list,
        "clip_policy": is_clip_policy,
        "forward_bits": is_forward_bits,
    }
)
