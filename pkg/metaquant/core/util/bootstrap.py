"""
Functions to support bootstrapping.

These functions should only be called when starting up a metaquant session.
They initialize things like logging and the config system.
"""

import logging
import os
import sys

from metaquant.core.command import EXIT_CONFIG
from metaquant.core.config import MQCFG
from metaquant.core.config import setup_config as _setup_config
from metaquant.core.exceptions import ConfigError
from metaquant.core.log import clear_root_handlers, setup_console_logging, setup_file_logging
from metaquant.core.spool import SPOOL
from metaquant.core.util.fmt import format_loglevel

LOG = logging.getLogger(__name__)


def setup_config(opts):
    """
    Load the global config, exiting with the configuration error code
    if it cannot be read
    """
    if not opts.quiet:
        setup_console_logging(level=format_loglevel(opts.log_level or "info"))
    try:
        _setup_config(opts.config_file)
    except (IOError, ConfigError) as ex:
        LOG.error("Failed to load metaquant config: %s", ex)
        sys.exit(EXIT_CONFIG)


def setup_logging(opts):
    """
    Setup console and global log file
    """
    clear_root_handlers()
    log_level = format_loglevel(getattr(opts, "log_level", None) or MQCFG.lookup("logging.level"))

    if not opts.quiet:
        setup_console_logging(level=log_level)

    filename = MQCFG.lookup("logging.filename")
    if filename:
        kwargs = {}
        if MQCFG.lookup("logging.format"):
            kwargs["msg_format"] = MQCFG.lookup("logging.format")
        try:
            setup_file_logging(str(filename), level=log_level, **kwargs)
        except IOError as exc:
            LOG.warning("Skipping file logging: %s", exc)


def bootstrap(opts):
    """
    Called by main() to setup everything
    """
    # Setup the configuration
    setup_config(opts)
    # Setup logging per config
    setup_logging(opts)
    # Setup spool
    run_directory = MQCFG.lookup("metaquant.run_directory")
    if MQCFG.configdir and not os.path.isabs(run_directory):
        run_directory = os.path.join(MQCFG.configdir, run_directory)
    SPOOL.path = run_directory
