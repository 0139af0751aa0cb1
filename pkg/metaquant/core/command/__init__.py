"""
Setup functions to import command plugins
"""

import logging
import os
import sys

from metaquant.core.plugin import get_commands

from .command import EXIT_ABORT, EXIT_CONFIG, EXIT_OK, EXIT_VALIDATION, PARSER, Command

__all__ = [
    "Command",
    "run",
    "PARSER",
    "EXIT_OK",
    "EXIT_VALIDATION",
    "EXIT_ABORT",
    "EXIT_CONFIG",
]

LOG = logging.getLogger(__name__)


def setup_commands():
    """
    Load plugins
    """
    commands = get_commands(include_aliases=False)
    for command_name in commands:
        commands[command_name]()
    return commands


def print_help():
    """
    display help
    """
    setup_commands()
    PARSER.print_help(sys.stderr)


def run(opts, args=None):
    """
    Run the target command
    """
    commands = get_commands()
    cmdobj = commands[opts.command]()
    try:
        return cmdobj.dispatch(opts, args or [])
    except KeyboardInterrupt:
        LOG.info("Interrupt")
        return os.EX_SOFTWARE


def parse_sys(args):
    """
    Load plugins and parse command line
    """
    setup_commands()
    return PARSER.parse_known_args(args)
