"""
Standard public exceptions that are raised by
the various APIs in metaquant
"""


class ConfigError(Exception):
    """Configuration error"""


class ArgumentError(Exception):
    """Invalid argument"""


class ValidationFailure(Exception):
    """A validation suite (grad-check, quantizer-check) reported failures"""


class TrainingAbort(Exception):
    """Training was aborted, typically on a non-finite loss

    :attribute diagnostics: dict of the last recorded metrics
    """

    def __init__(self, message, diagnostics=None):
        Exception.__init__(self, message)
        self.message = message
        self.diagnostics = diagnostics or {}


class GraphError(Exception):
    """Invalid use of the autodiff graph"""


class ShapeError(GraphError):
    """Operand shapes are incompatible with an operation

    :attribute op: the op-kind being recorded
    :attribute shapes: the offending operand shapes
    """

    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = shapes
        GraphError.__init__(
            self,
            "%s: incompatible shapes %s" % (op, " and ".join(str(tuple(s)) for s in shapes)),
        )


class NonFiniteError(GraphError):
    """NaN or Inf produced while debug checks are enabled"""


class QuantizationError(Exception):
    """Invalid quantizer parameters"""


class DataFormatError(Exception):
    """Dataset file does not match its expected on-disk format"""
