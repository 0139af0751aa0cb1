"""This file defines the default options available
 and the entry point for the metaquant command"""

import logging
import os
import sys

from metaquant.core.command import EXIT_CONFIG, parse_sys, print_help, run
from metaquant.core.command.command import METAQUANT_VERSION
from metaquant.core.config.checks import is_logging_level
from metaquant.core.util.bootstrap import bootstrap

LOG = logging.getLogger(__name__)


def main(argv=None):
    """The main entrypoint for metaquant's cmdshell"""
    argv = sys.argv[1:] if argv is None else argv

    if not argv:
        print_help()
        return 1

    opts, args = parse_sys(argv)

    logging.raiseExceptions = bool(opts.log_level == "debug")
    if opts.log_level:
        opts.log_level = is_logging_level(opts.log_level)

    if opts.command is None:
        print_help()
        return 1

    # Bootstrap the environment
    bootstrap(opts)

    if args:
        LOG.error("Unrecognized arguments: %s", " ".join(args))
        return EXIT_CONFIG

    LOG.debug("metaquant %s started with pid %d", METAQUANT_VERSION, os.getpid())
    return run(opts, args)


if __name__ == "__main__":
    sys.exit(main())
