"""
Configuration API support
"""

import difflib
import logging
import os

from metaquant.core.exceptions import ConfigError

from .checks import VALIDATOR

# get_extra_values was added in configobj 4.7
try:
    from configobj import ConfigObj, Section, flatten_errors, get_extra_values
except ImportError:
    from configobj import ConfigObj, Section, flatten_errors


LOG = logging.getLogger(__name__)

CONFIG_SUFFIX = ".conf"

# Main metaquant configspec
CONFIGSPEC = """
[metaquant]
run_directory       = string(default=runs)
seed                = integer(min=0, default=0)

[logging]
level               = logging_level(default='info')
filename            = string(default=None)
format              = string(default=None)
""".splitlines()


def spec_keys(configspec):
    """Dotted names of every key declared in a configspec"""
    keys = []
    section = []
    for line in configspec:
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            section = [line.strip("[]").strip()]
            continue
        if "=" in line:
            keys.append(".".join(section + [line.split("=", 1)[0].strip()]))
    return keys


def nearest_key(name, candidates):
    """Closest valid key to ``name``, or None"""
    matches = difflib.get_close_matches(name, candidates, n=1, cutoff=0.0)
    return matches[0] if matches else None


def prune_none(values):
    """Copy of a nested mapping without the keys whose value is None"""
    pruned = {}
    for key, value in values.items():
        if isinstance(value, dict):
            pruned[key] = prune_none(value)
        elif value is not None:
            pruned[key] = value
    return pruned


class BaseConfig(ConfigObj):
    """
    Provides basic configuration support.  This
    is a subclass of ConfigObj but adds a few
    extra convenient method.
    """

    def __init__(self, path, configspec=None, file_error=True):
        ConfigObj.__init__(
            self,
            path,
            file_error=file_error,
            interpolation=False,
            write_empty_values=True,
            encoding="utf8",
            default_encoding="utf8",
            configspec=configspec,
        )
        self.walk(self._canonicalize, call_on_sections=True)

    @staticmethod
    def _canonicalize(section, key):
        """Rewrite all keys so that dashes are normalized to underscores"""
        if "-" in key:
            section.rename(key, str(key.replace("-", "_")))

    def reload(self):
        """Reloads ConfigObj from filesystem, then recursively walks each
        section.
        """
        ConfigObj.reload(self)
        self.walk(self._canonicalize, call_on_sections=True)

    def validate_config(self, configspec, suppress_warnings=False, strict=False):
        """
        Validate this config with the given configspec

        :param strict: unknown keys are errors (naming the nearest valid
                       key) instead of warnings
        :raises: ConfigError
        """
        self._handle_configspec(configspec)
        errors = self.validate(VALIDATOR, preserve_errors=True)
        messages = []
        for entry in flatten_errors(self, errors):
            section_list, key, error = entry
            name = ".".join(section_list + [key or ""])
            if not error:
                LOG.error("Missing parameter %s", name)
                messages.append("missing parameter %s" % name)
            else:
                LOG.error("Configuration error %s: %s", name, error)
                messages.append("%s: %s" % (name, error))

        unknown = []
        try:
            extra = get_extra_values(self)
        except NameError:
            extra = []
        valid = spec_keys(configspec)
        for sections, name in extra:
            dotted = ".".join(list(sections) + [name])
            suggestion = nearest_key(dotted, valid)
            if strict:
                unknown.append("unknown key '%s' (did you mean '%s'?)" % (dotted, suggestion))
            elif not suppress_warnings:
                LOG.warning("Unknown parameter '%s' in section '%s'", name, ".".join(sections))

        if errors is not True or unknown:
            raise ConfigError(
                "Configuration errors in %s: %s"
                % (self.filename or "<config>", "; ".join(messages + unknown))
            )
        return errors

    def lookup(self, key, safe=True):
        """
        Lookup a configuration item based on the
        dot-separated path.
        """
        parts = key.split(".")
        # lookup key as a . separated hierarchy path
        section = self
        result = None
        count = 0
        for count, name in enumerate(parts):
            if not isinstance(section, Section):
                result = None
                break
            result = section.get(name)
            section = result
        if result is None and not safe:
            raise KeyError("%r not found (%r)" % (key, parts[count]))
        if isinstance(result, bytes):
            return result.decode("utf-8")
        return result


class GlobalConfig(BaseConfig):
    """
    Load metaquant's global config.
    """

    def __init__(self, filename):
        if filename:
            self.filename = os.path.abspath(filename)
            self.configdir = os.path.dirname(self.filename)
        else:
            self.filename = None
            self.configdir = None
        BaseConfig.__init__(self, self.filename)


MQCFG = GlobalConfig(None)


def setup_config(config_file):
    """
    Configure the default MQCFG instance in this module
    """
    if not config_file or not os.path.exists(config_file):
        if config_file:
            LOG.debug("Global config %s not found, using defaults", config_file)
        MQCFG.clear()
        MQCFG.filename = None
        MQCFG.validate_config(CONFIGSPEC)
        return None

    config_file = os.path.abspath(config_file)
    LOG.debug("Loading %r", config_file)
    MQCFG.clear()
    MQCFG.filename = config_file
    MQCFG.reload()
    MQCFG.validate_config(CONFIGSPEC)
    MQCFG.configdir = os.path.dirname(config_file)

    return None
