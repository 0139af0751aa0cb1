"""Console, global log file and per-run train.log handlers
"""

import logging

__all__ = [
    "clear_root_handlers",
    "setup_console_logging",
    "setup_file_logging",
    "attach_run_log",
    "detach_handler",
]

DEFAULT_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
DEFAULT_LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
CONSOLE_FORMAT = "%(message)s"
DEFAULT_LOG_LEVEL = logging.INFO


def _add_handler(handler, level, msg_format, datefmt=DEFAULT_DATE_FORMAT):
    root = logging.getLogger()
    if not root.handlers or root.level == logging.NOTSET:
        root.setLevel(level)
    else:
        root.setLevel(min(root.level, level))
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(msg_format, datefmt))
    root.addHandler(handler)
    return handler


def clear_root_handlers():
    """Remove and close every root handler"""
    root = logging.getLogger()
    for handler in list(root.handlers):
        detach_handler(handler)


def detach_handler(handler):
    """Remove ``handler`` from the root logger and close it"""
    logging.getLogger().removeHandler(handler)
    handler.close()


def setup_console_logging(level=DEFAULT_LOG_LEVEL, msg_format=CONSOLE_FORMAT):
    """Log to stderr"""
    return _add_handler(logging.StreamHandler(), level, msg_format)


def setup_file_logging(filename, level=DEFAULT_LOG_LEVEL, msg_format=DEFAULT_LOG_FORMAT):
    """Append to the global log file"""
    return _add_handler(logging.FileHandler(filename, "a", encoding="utf8"), level, msg_format)


def attach_run_log(path, level=logging.INFO):
    """
    Mirror records into a run's train.log until the returned handler is
    passed to :func:`detach_handler`. A rerun into the same directory replaces
    the previous log.
    """
    return _add_handler(logging.FileHandler(path, "w", encoding="utf8"), level, DEFAULT_LOG_FORMAT)
