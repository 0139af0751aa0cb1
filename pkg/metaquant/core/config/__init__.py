"""
Module to read configuration files
"""

from .config import MQCFG, BaseConfig, ConfigError, setup_config
from .experiment import ExperimentConfig, parse_config

__all__ = ["MQCFG", "setup_config", "parse_config", "BaseConfig", "ExperimentConfig"]
