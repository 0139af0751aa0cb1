"""
Finite-difference gradient checks
"""

import logging
import time

from metaquant.core.command import Command
from metaquant.core.exceptions import ValidationFailure
from metaquant.core.plugin import HYPERNET_GROUP, iter_plugins
from metaquant.core.util.fmt import format_interval
from metaquant.lib.checks import GRAD_TOLERANCE, check_ops, hypernet_grad_check

LOG = logging.getLogger(__name__)


def print_results(title, results):
    """Print a name / error / status table"""
    print(title)
    print("-" * 60)
    for result in results:
        print(
            "%-36s %12.3e  %s" % (result.name, result.error, "ok" if result.passed else "FAILED")
        )


class GradCheck(Command):
    """Compare autodiff against central finite differences in FP64: every
    differentiable op, then the hypernetwork gradient of a toy
    delayed-update system for each design with the quantizer bypassed.

    ``--keep-history`` adds the negative control: the hypernetwork sees the
    weight still attached to its history, which the finite-difference
    oracle does not model, so those checks are expected to fail.
    """

    name = "grad-check"
    aliases = ["gc"]
    description = "Finite-difference check of op and hypernetwork gradients"

    args = [["--design"], ["--seed"], ["--tolerance"], ["--skip-ops"], ["--keep-history"]]
    kargs = [
        {"action": "append", "default": [], "help": "Design to check, may be repeated"},
        {"type": int, "default": 0, "help": "Random seed"},
        {"type": float, "default": GRAD_TOLERANCE, "help": "Max relative error"},
        {"action": "store_true", "default": False, "help": "Skip the per-op checks"},
        {
            "action": "store_true",
            "default": False,
            "help": "Also run the negative control with the weight history kept",
        },
    ]

    def run(self, cmd, opts, *args):
        started = time.time()
        designs = opts.design or [name for name, _ in iter_plugins(HYPERNET_GROUP)]
        results = []
        if not opts.skip_ops:
            op_results = check_ops(opts.seed, opts.tolerance)
            print_results("Op gradients", op_results)
            results.extend(op_results)

        design_results = [
            hypernet_grad_check(design, opts.seed, tolerance=opts.tolerance) for design in designs
        ]
        if opts.keep_history:
            design_results.extend(
                hypernet_grad_check(design, opts.seed, detach=False, tolerance=opts.tolerance)
                for design in designs
            )
        print_results("Hypernetwork gradients (max relative error per design)", design_results)
        results.extend(design_results)

        failed = [result.name for result in results if not result.passed]
        LOG.info("Gradient checks finished in %s", format_interval(time.time() - started))
        if failed:
            raise ValidationFailure(
                "%d of %d gradient checks exceeded %g: %s"
                % (len(failed), len(results), opts.tolerance, ", ".join(failed))
            )
        return 0
