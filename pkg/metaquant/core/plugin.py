"""
Core plugin support

Commands and hypernetwork designs are looked up through setuptools entry
points.  When metaquant itself is not installed (running from a checkout)
the built-in table below is used instead.
"""

import importlib
import logging

try:
    from pkg_resources import DistributionNotFound, iter_entry_points
except ImportError:  # pragma: no cover - setuptools without pkg_resources
    DistributionNotFound = LookupError

    def iter_entry_points(group, name=None):
        """importlib.metadata fallback with the pkg_resources signature"""
        from importlib.metadata import entry_points

        for entry_point in entry_points(group=group):
            if name is None or entry_point.name == name:
                yield entry_point


LOG = logging.getLogger(__name__)

COMMAND_GROUP = "metaquant.commands"
HYPERNET_GROUP = "metaquant.hypernet"

BUILTIN_PLUGINS = {
    COMMAND_GROUP: {
        "train": "metaquant.commands.train:Train",
        "eval": "metaquant.commands.evaluate:Evaluate",
        "grad-check": "metaquant.commands.grad_check:GradCheck",
        "quantizer-check": "metaquant.commands.quantizer_check:QuantizerCheck",
        "ablation": "metaquant.commands.ablation:Ablation",
        "list-plugins": "metaquant.commands.list_plugins:ListPlugins",
        "mk-config": "metaquant.commands.mk_config:MkConfig",
    },
    HYPERNET_GROUP: {
        "multifc": "metaquant.hypernet.multifc:MultiFC",
        "lstmfc": "metaquant.hypernet.lstmfc:LSTMFC",
        "duallstmfc": "metaquant.hypernet.duallstmfc:DualLSTMFC",
    },
}


class PluginLoadError(Exception):
    """
    A plugin could not be found or imported
    """


def _load_builtin(spec):
    module_name, attr = spec.split(":")
    module = importlib.import_module(module_name)
    return getattr(module, attr)


def _iter_group(group):
    """Yield (name, loader) pairs, installed entry points first"""
    seen = set()
    try:
        entry_points = list(iter_entry_points(group))
    except Exception as ex:  # pylint: disable=broad-except
        LOG.debug("Entry point scan for %s failed: %s", group, ex)
        entry_points = []
    for entry_point in entry_points:
        if entry_point.name in seen:
            continue
        seen.add(entry_point.name)
        yield entry_point.name, entry_point.load
    for name, spec in sorted(BUILTIN_PLUGINS.get(group, {}).items()):
        if name not in seen:
            seen.add(name)
            yield name, (lambda spec=spec: _load_builtin(spec))


def load_first_entrypoint(group, name=None):
    """
    load the first entrypoint matching group and name
    """
    for entry_name, loader in _iter_group(group):
        if name is not None and entry_name != name:
            continue
        try:
            return loader()
        except DistributionNotFound as ex:
            raise PluginLoadError("Could not find dependency '%s'" % ex)
        except (ImportError, AttributeError) as ex:
            raise PluginLoadError(ex)
    raise PluginLoadError("'%s' not found" % ".".join((group, str(name))))


def load_hypernet_design(name):
    """
    Load the hypernetwork design class registered as ``name``
    """
    return load_first_entrypoint(HYPERNET_GROUP, name.lower())


def get_commands(include_aliases=True):
    """
    Get dict of available commands
    """
    cmds = {}
    for name, loader in _iter_group(COMMAND_GROUP):
        try:
            cmdcls = loader()
        except ImportError as ex:
            LOG.warning("Skipping command plugin %s: %s", name, ex)
            continue
        cmds[cmdcls.name] = cmdcls
        if include_aliases:
            for alias in cmdcls.aliases:
                cmds[alias] = cmdcls
    return cmds


def iter_plugins(group):
    """
    Iterate over (name, class) for every loadable plugin in ``group``
    """
    for name, loader in _iter_group(group):
        try:
            yield name, loader()
        except ImportError as ex:
            LOG.warning("Skipping plugin %s.%s: %s", group, name, ex)
