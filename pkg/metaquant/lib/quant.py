"""
Quantizers.

The symmetric uniform gradient quantizer maps a clipped value onto the grid
S = {c*k/L : |k| <= L} with L = 2**(B-1) - 1, rounding half away from zero so
that Q(-x) == -Q(x).  The forward-pass weight/activation quantizers follow the
DoReFa scheme.  Every graph op here uses a straight-through estimator.
"""

import collections
import logging
import re

import numpy as np

from metaquant.core.exceptions import QuantizationError

from .autodiff.ops import Function, OpKind, register
from .autodiff.tape import record

LOG = logging.getLogger(__name__)

MIN_BITS = 2
MAX_BITS = 16
# forward-pass bit-width meaning "leave in full precision"
FULL_PRECISION_BITS = 32
DEFAULT_EPS_FLOOR = 1e-12

Clip = collections.namedtuple("Clip", "value degenerate")


class ClipPolicy(object):
    """How the clip value c is chosen per tensor

    One of ``max-abs``, ``percentile(p)`` with 0 < p <= 100, or ``fixed(c)``.
    """

    _PATTERN = re.compile(r"^\s*(max-abs|percentile|fixed)\s*(?:\(\s*([^)]+)\s*\))?\s*$")

    def __init__(self, kind="max-abs", value=None):
        if kind not in ("max-abs", "percentile", "fixed"):
            raise QuantizationError("Unknown clip policy %r" % kind)
        if kind == "percentile" and not (value is not None and 0 < value <= 100):
            raise QuantizationError("percentile clip needs 0 < p <= 100, got %r" % value)
        if kind == "fixed" and not (value is not None and value > 0):
            raise QuantizationError("fixed clip needs c > 0, got %r" % value)
        self.kind = kind
        self.value = value

    @classmethod
    def parse(cls, text):
        """Parse ``max-abs``, ``percentile(99)`` or ``fixed(0.5)``"""
        if isinstance(text, ClipPolicy):
            return text
        match = cls._PATTERN.match(str(text))
        if not match:
            raise QuantizationError("Invalid clip policy %r" % text)
        kind, arg = match.groups()
        if kind == "max-abs":
            if arg is not None:
                raise QuantizationError("max-abs takes no argument: %r" % text)
            return cls(kind)
        if arg is None:
            raise QuantizationError("%s needs an argument: %r" % (kind, text))
        try:
            return cls(kind, float(arg))
        except ValueError:
            raise QuantizationError("Invalid clip policy argument in %r" % text)

    def __eq__(self, other):
        if not isinstance(other, ClipPolicy):
            return False
        return (self.kind, self.value) == (other.kind, other.value)

    def __hash__(self):
        return hash((self.kind, self.value))

    def __str__(self):
        if self.kind == "max-abs":
            return self.kind
        return "%s(%g)" % (self.kind, self.value)

    __repr__ = __str__


class QuantConfig(object):
    """Parameters of the symmetric uniform quantizer

    :param bits: bit-width B, 2 <= B <= 16
    :param clip_policy: ClipPolicy or its string form
    :param eps_floor: clip value returned for all-zero input
    :param enabled: used by the error-signal path; disabled means passthrough
    :param bypass: skip Q altogether (finite-difference checks only)
    """

    tie_rule = "half-away-from-zero"

    def __init__(
        self, bits, clip_policy="max-abs", eps_floor=DEFAULT_EPS_FLOOR, enabled=True, bypass=False
    ):
        if not MIN_BITS <= int(bits) <= MAX_BITS:
            raise QuantizationError(
                "bit-width must be in [%d, %d], got %r" % (MIN_BITS, MAX_BITS, bits)
            )
        if eps_floor <= 0:
            raise QuantizationError("eps_floor must be positive")
        self.bits = int(bits)
        self.clip_policy = ClipPolicy.parse(clip_policy)
        self.eps_floor = float(eps_floor)
        self.enabled = bool(enabled)
        self.bypass = bool(bypass)

    @property
    def levels(self):
        return max_code(self.bits)

    def __repr__(self):
        return "QuantConfig(bits=%d, clip=%s%s)" % (
            self.bits,
            self.clip_policy,
            ", bypass" if self.bypass else "",
        )


class QuantLevels(object):
    """Integer codes plus the (c, B) needed to de-quantize them"""

    def __init__(self, codes, clip, bits, dtype=np.float64):
        self.codes = codes
        self.clip = float(clip)
        self.bits = int(bits)
        self.dtype = dtype

    @property
    def levels(self):
        return max_code(self.bits)


def max_code(bits):
    """Largest code magnitude 2**(B-1) - 1"""
    return 2 ** (int(bits) - 1) - 1


def round_half_away(values):
    """Round to nearest integer, ties away from zero

    The fractional part is taken exactly (floor of a non-negative float is
    exact and the subtraction is exact by Sterbenz), so no value just below
    a half is pushed over it.
    """
    mag = np.abs(values)
    whole = np.floor(mag)
    rounded = whole + (mag - whole >= 0.5)
    return np.copysign(rounded, values)


def select_clip(x, policy="max-abs", eps_floor=DEFAULT_EPS_FLOOR):
    """Choose the clip value c for tensor ``x``

    :returns: Clip(value, degenerate); degenerate is set for all-zero input,
              in which case value is ``eps_floor``
    """
    policy = ClipPolicy.parse(policy)
    mag = np.abs(np.asarray(x, dtype=np.float64))
    peak = float(mag.max()) if mag.size else 0.0
    if peak == 0.0:
        LOG.debug("Degenerate all-zero tensor; clip floored to %g", eps_floor)
        return Clip(float(eps_floor), True)
    if policy.kind == "max-abs":
        return Clip(peak, False)
    if policy.kind == "fixed":
        return Clip(float(policy.value), False)
    value = float(np.percentile(mag, policy.value))
    if value <= 0.0:
        # the percentile landed in a run of zeros; c must stay positive
        value = peak
    return Clip(value, False)


def quantize(x, clip, bits):
    """Integer codes round(clip(x, c) * L / c) with L = 2**(B-1) - 1"""
    if not clip > 0:
        raise QuantizationError("clip value must be positive, got %r" % clip)
    if not MIN_BITS <= int(bits) <= MAX_BITS:
        raise QuantizationError(
            "bit-width must be in [%d, %d], got %r" % (MIN_BITS, MAX_BITS, bits)
        )
    x = np.asarray(x)
    levels = max_code(bits)
    scaled = np.clip(x, -clip, clip) * (levels / clip)
    codes = round_half_away(scaled).astype(np.int64)
    return QuantLevels(codes, clip, bits, dtype=x.dtype if x.dtype.kind == "f" else np.float64)


def dequantize(q):
    """codes * c / L, every output is an element of S

    Saturated codes map to exactly +-c.
    """
    values = q.codes * q.clip / q.levels
    values = np.where(np.abs(q.codes) == q.levels, np.sign(q.codes) * q.clip, values)
    return values.astype(q.dtype)


def fake_quantize_array(x, cfg, clip=None):
    """Quantize then de-quantize a plain array

    :returns: (values, Clip)
    """
    x = np.asarray(x)
    if clip is None:
        clip = select_clip(x, cfg.clip_policy, cfg.eps_floor)
    elif not isinstance(clip, Clip):
        clip = Clip(float(clip), False)
    if clip.degenerate:
        return np.zeros_like(x), clip
    return dequantize(quantize(x, clip.value, cfg.bits)), clip


@register(OpKind.FAKE_QUANT)
class FakeQuantize(Function):
    """Q followed by de-quantization; clipped STE backward"""

    def forward(self, x):
        clip = self.attrs["clip"]
        self.inside = np.abs(x) <= clip.value
        if clip.degenerate:
            return np.zeros_like(x)
        return dequantize(quantize(x, clip.value, self.attrs["bits"]))

    def backward(self, grad):
        return (grad * self.inside,)


def fake_quantize(x, cfg, clip=None):
    """Differentiable Q on a graph node

    :param clip: fixed clip value (float or Clip); chosen by the policy when None
    :returns: node; its ``fn.attrs['clip']`` records the Clip used
    """
    if clip is None:
        clip = select_clip(x.value, cfg.clip_policy, cfg.eps_floor)
    elif not isinstance(clip, Clip):
        clip = Clip(float(clip), False)
    return record(OpKind.FAKE_QUANT, [x], clip=clip, bits=cfg.bits)


def _dorefa_levels(bits):
    return float(2 ** int(bits) - 1)


@register(OpKind.DOREFA_WEIGHT)
class DorefaWeight(Function):
    """w -> 2*q_k(tanh(w) / (2 max|tanh(w)|) + 1/2) - 1

    Backward is straight-through over the rounding and differentiates the
    tanh normalisation with the max treated as a constant.
    """

    def forward(self, w):
        squashed = np.tanh(w)
        peak = np.abs(squashed).max() if squashed.size else 0
        if peak == 0:
            self.passthrough = True
            return w.copy()
        self.passthrough = False
        self.slope = (1 - squashed * squashed) / peak
        levels = _dorefa_levels(self.attrs["bits"])
        unit = squashed / (2 * peak) + 0.5
        quantized = round_half_away(unit * levels) / levels
        return (2 * quantized - 1).astype(w.dtype)

    def backward(self, grad):
        if self.passthrough:
            return (grad,)
        return (grad * self.slope,)


@register(OpKind.DOREFA_ACT)
class DorefaActivation(Function):
    """a -> q_k(clip(a, 0, 1)); gradient passes where 0 <= a <= 1"""

    def forward(self, a):
        self.inside = (a >= 0) & (a <= 1)
        levels = _dorefa_levels(self.attrs["bits"])
        return (round_half_away(np.clip(a, 0, 1) * levels) / levels).astype(a.dtype)

    def backward(self, grad):
        return (grad * self.inside,)


def dorefa_weight_quantize(w, bits):
    """DoReFa weight quantizer; ``bits >= 32`` leaves ``w`` untouched"""
    if int(bits) >= FULL_PRECISION_BITS:
        return w
    return record(OpKind.DOREFA_WEIGHT, [w], bits=int(bits))


def dorefa_activation_quantize(a, bits):
    """DoReFa activation quantizer; ``bits >= 32`` means no quantization"""
    if int(bits) >= FULL_PRECISION_BITS:
        return a
    return record(OpKind.DOREFA_ACT, [a], bits=int(bits))


def quantize_error_signal(g, cfg):
    """Plain (non-meta) quantization of an activation gradient"""
    if cfg is None or not cfg.enabled:
        return g
    values, _ = fake_quantize_array(g, cfg)
    return values


@register(OpKind.ERROR_QUANT)
class ErrorSignalQuantize(Function):
    """Identity forward; quantizes the error signal flowing back"""

    def forward(self, x):
        return x

    def backward(self, grad):
        return (quantize_error_signal(grad, self.attrs["cfg"]),)


def error_signal_quantize(x, cfg):
    """Insert error-signal quantization after ``x`` when ``cfg`` is enabled"""
    if cfg is None or not cfg.enabled:
        return x
    return record(OpKind.ERROR_QUANT, [x], cfg=cfg)
