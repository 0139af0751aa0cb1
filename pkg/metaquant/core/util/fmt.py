"""
Formatting helpers for run summaries and console reports
"""

import logging

LOG_LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warning": logging.WARNING,
    "error": logging.ERROR,
    "critical": logging.CRITICAL,
}


def format_interval(seconds):
    """
    Compact duration: '850ms', '12.40s', '3m 05s' or '2h 14m'
    """
    seconds = max(float(seconds), 0.0)
    if seconds < 1:
        return "%dms" % round(seconds * 1000)
    if seconds < 60:
        return "%.2fs" % seconds
    minutes, secs = divmod(int(round(seconds)), 60)
    if minutes < 60:
        return "%dm %02ds" % (minutes, secs)
    hours, minutes = divmod(minutes, 60)
    return "%dh %02dm" % (hours, minutes)


def format_rate(count, seconds, unit="it"):
    """'120.5 it/s'; 'n/a' when no time elapsed"""
    if seconds <= 0:
        return "n/a"
    return "%.1f %s/s" % (count / float(seconds), unit)


def format_accuracy(value):
    """0.9161 -> '91.61%'"""
    if value is None:
        return "n/a"
    return "%.2f%%" % (100.0 * value)


def format_delta(value):
    """Signed accuracy difference in points, e.g. '-0.64'"""
    if value is None:
        return "n/a"
    return "%+.2f" % (100.0 * value)


def format_loglevel(level):
    """
    Map a level name ('info', ' DEBUG ') to its logging constant.
    Integers pass through; unknown names give None.
    """
    if isinstance(level, int):
        return level
    return LOG_LEVELS.get(str(level).lower().strip())
