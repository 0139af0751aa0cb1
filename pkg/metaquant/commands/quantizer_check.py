"""
Quantizer oracle and property sweeps
"""

import logging
import time

from metaquant.core.command import Command
from metaquant.core.exceptions import ValidationFailure
from metaquant.core.util.fmt import format_interval
from metaquant.lib.checks import ORACLE_CASES, QUANTIZER_CHECKS

LOG = logging.getLogger(__name__)


class QuantizerCheck(Command):
    """Compare the gradient quantizer against a brute-force nearest-level
    oracle (ties away from zero) and sweep odd symmetry, monotonicity and
    idempotence over random (x, c, B) cases.
    """

    name = "quantizer-check"
    aliases = ["qc"]
    description = "Check the gradient quantizer against a brute-force oracle"

    args = [["--cases"], ["--seed"]]
    kargs = [
        {"type": int, "default": ORACLE_CASES, "help": "Cases per sweep"},
        {"type": int, "default": 0, "help": "Random seed"},
    ]

    def run(self, cmd, opts, *args):
        started = time.time()
        failed = []
        print("%-16s %10s %12s  %s" % ("Check", "Cases", "Mismatches", "Status"))
        print("-" * 60)
        for offset, (name, check) in enumerate(QUANTIZER_CHECKS.items()):
            result = check(opts.cases, opts.seed + offset)
            status = "ok" if result.passed else "FAILED"
            print("%-16s %10d %12d  %s" % (name, result.cases, result.error, status))
            if not result.passed:
                failed.append(name)
        LOG.info("Quantizer checks finished in %s", format_interval(time.time() - started))
        if failed:
            raise ValidationFailure("quantizer checks failed: %s" % ", ".join(failed))
        return 0
