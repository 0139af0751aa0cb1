"""
Command support for generating experiment configs
"""

import logging
import sys

from configobj import ConfigObj, flatten_errors

from metaquant.core.command import Command
from metaquant.core.config.checks import VALIDATOR
from metaquant.core.config.experiment import EXPERIMENT_CONFIGSPEC

LOG = logging.getLogger(__name__)


def _comment_out_unset(section, skip_comments):
    """Replace default=None keys by a commented placeholder"""
    pending = []
    for key in list(section.scalars):
        value = section[key]
        comments = [] if skip_comments else section.comments.get(key, [])
        if value is None:
            pending.extend(comments)
            pending.append('%s = "" # no default' % key)
            del section[key]
            continue
        section.comments[key] = pending + comments
        del pending[:]
        if value is True or value is False:
            section[key] = "yes" if value else "no"
    return pending


def experiment_template(skip_comments=False):
    """Lines of an experiment config holding every default

    Keys without a default are left as comments.
    """
    config = ConfigObj(
        [], configspec=EXPERIMENT_CONFIGSPEC, list_values=True, stringify=True, interpolation=False
    )
    errors = config.validate(VALIDATOR, preserve_errors=True, copy=True)
    for section_list, key, error in flatten_errors(config, errors):
        LOG.error("Bad configspec entry %s: %s", ".".join(section_list + [key or ""]), error)
    leftover = _comment_out_unset(config, skip_comments)
    for name in config.sections:
        section = config[name]
        comments = [] if skip_comments else [""] + config.comments.get(name, [])
        config.comments[name] = leftover + comments
        leftover = _comment_out_unset(section, skip_comments)
    config.final_comment = leftover
    if skip_comments:
        config.initial_comment = []
    else:
        config.initial_comment = [line for line in config.initial_comment if line.strip()]
    return config.write()


class MkConfig(Command):
    """Print an experiment config template with every key at its default,
    derived from the experiment configspec.
    """

    name = "mk-config"
    aliases = ["mc"]
    description = "Generate an experiment config template"

    args = [["--file", "-f"], ["--minimal", "-m"]]
    kargs = [
        {"help": "Save the template to the specified file"},
        {
            "help": "Do not include comments from the configspec",
            "action": "store_true",
            "default": False,
        },
    ]

    def run(self, cmd, opts, *args):
        lines = experiment_template(skip_comments=opts.minimal)
        if opts.file:
            with open(opts.file, "w") as fileobj:
                fileobj.write("\n".join(lines) + "\n")
            LOG.info("Wrote experiment template to %s", opts.file)
        else:
            sys.stdout.write("\n".join(lines) + "\n")
        return 0
