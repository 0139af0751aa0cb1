"""
Print the available hypernetwork designs and commands
"""

import logging

import numpy as np

from metaquant.core.command import Command
from metaquant.core.plugin import COMMAND_GROUP, HYPERNET_GROUP, iter_plugins

LOG = logging.getLogger(__name__)


def design_param_count(design_cls, hidden):
    """Number of psi scalars ``design_cls`` allocates at width ``hidden``"""
    arrays = design_cls(hidden).init_params(np.random.RandomState(0))
    return int(sum(value.size for value in arrays.values()))


def format_table(rows):
    """Left-aligned columns sized to their widest cell"""
    widths = [max(len(str(row[col])) for row in rows) for col in range(len(rows[0]))]
    lines = []
    for idx, row in enumerate(rows):
        cells = [str(cell).ljust(width) for cell, width in zip(row, widths)]
        lines.append("  ".join(cells).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * width for width in widths))
    return "\n".join(lines)


class ListPlugins(Command):
    """Lists hypernetwork designs and commands, installed or built in"""

    name = "list-plugins"
    aliases = ["lp"]
    description = "List hypernetwork designs and commands"

    args = [["--hidden"]]
    kargs = [
        {
            "metavar": "H",
            "type": int,
            "default": 11,
            "help": "Hidden width used for the design parameter counts (default: 11)",
        }
    ]

    def run(self, cmd, opts, *args):
        if args:
            LOG.warning("%s takes no positional arguments; ignoring %s", cmd, " ".join(args))
        rows = []
        for name, design_cls in iter_plugins(HYPERNET_GROUP):
            count = design_param_count(design_cls, opts.hidden)
            rows.append(["hypernet", name, str(count), design_cls.description])
        for name, command_cls in iter_plugins(COMMAND_GROUP):
            rows.append(["command", name, "", command_cls.description])
        if not rows:
            print("No plugins found")
            return 0
        rows.sort()
        header = ["type", "name", "psi@H=%d" % opts.hidden, "summary"]
        print(format_table([header] + rows))
        return 0
