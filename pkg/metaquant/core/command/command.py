"""
Pluggable command support
"""

import argparse
import logging
import os

from metaquant import __version__
from metaquant.core.exceptions import (
    ArgumentError,
    ConfigError,
    TrainingAbort,
    ValidationFailure,
)

try:
    from pkg_resources import DistributionNotFound, get_distribution
except ImportError:  # pragma: no cover
    get_distribution = None

LOG = logging.getLogger(__name__)


def _version():
    if get_distribution is None:
        return __version__
    try:
        return get_distribution("metaquant").version
    except DistributionNotFound:
        return __version__


METAQUANT_VERSION = _version()
METAQUANT_BANNER = """
metaquant v%s
Hypernetwork meta-quantized gradients for quantization-aware training
""" % (
    METAQUANT_VERSION
)

METAQUANT_CONF = "~/.metaquant.conf"

# exit codes
EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_ABORT = 2
EXIT_CONFIG = 3

## global parser
PARSER = argparse.ArgumentParser(
    prog="metaquant", description=METAQUANT_BANNER, formatter_class=argparse.RawTextHelpFormatter
)
PARSER.add_argument(
    "-v",
    "--verbose",
    action="store_const",
    const="info",
    dest="log_level",
    help="Log verbose output",
)
PARSER.add_argument(
    "-d", "--debug", action="store_const", const="debug", dest="log_level", help="Log debug output"
)
PARSER.add_argument(
    "-c", "--config-file", metavar="<file>", help="Read configuration from the given file"
)
PARSER.add_argument("-q", "--quiet", action="store_true", help="Don't log to console")
PARSER.add_argument(
    "-l",
    "--log-level",
    metavar="<log-level>",
    choices=["critical", "error", "warning", "info", "debug"],
    help="Specify the log level. One of: critical,error,warning,info,debug",
)
PARSER.add_argument("--version", action="version", version=METAQUANT_VERSION)
PARSER.set_defaults(
    log_level=None,
    quiet=False,
    config_file=os.path.expanduser(os.getenv("METAQUANT_CONFIG", METAQUANT_CONF)),
)
SUBPARSER = PARSER.add_subparsers(dest="command")


class Command(object):
    """Base Command class for implementing pluggable
    commands.

    Subclasses declare ``name``, ``aliases``, ``description`` and their
    options as two parallel lists: ``args`` holds the flag names and
    ``kargs`` the matching ``add_argument`` keywords.  ``run`` receives the
    parsed options.
    """

    name = None
    aliases = []
    args = []
    kargs = []
    description = " "

    def __init__(self):
        if self.name in SUBPARSER.choices:
            self.optparser = SUBPARSER.choices[self.name]
            return
        self.optparser = SUBPARSER.add_parser(
            self.name,
            help=self.description,
            aliases=self.aliases,
            description=self.description,
        )

        for counter, arg in enumerate(self.args):
            self.optparser.add_argument(*arg, **self.kargs[counter])

    def run(self, cmd, opts, *args):
        """
        This should be overridden by subclasses
        """
        raise NotImplementedError()

    def dispatch(self, opts, args):
        """
        Delegate to self.run(*args) and map failures to exit codes:
        1 validation failure, 2 training abort, 3 configuration error
        """
        try:
            return self.run(self.optparser.prog, opts, *args)
        except KeyboardInterrupt:
            LOG.debug("Interrupted by user")
            raise
        except (ConfigError, ArgumentError) as ex:
            LOG.error("%s: configuration error: %s", self.optparser.prog, ex)
            return EXIT_CONFIG
        except ValidationFailure as ex:
            LOG.error("%s: validation failed: %s", self.optparser.prog, ex)
            return EXIT_VALIDATION
        except TrainingAbort as ex:
            LOG.error("%s: training aborted: %s", self.optparser.prog, ex.message)
            for key, value in sorted(ex.diagnostics.items()):
                LOG.error("  %s = %r", key, value)
            return EXIT_ABORT
        except Exception as ex:
            LOG.error(
                "Uncaught exception while running command '%s': %r",
                self.optparser.prog,
                ex,
                exc_info=True,
            )
            raise
