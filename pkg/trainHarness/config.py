"""
Configuration Module for GrokLab

This module handles environment-driven settings for training runs and sweeps.
It loads environment variables and provides a centralized place for configuration settings.
"""

import logging
import os
import sys
from typing import Any, Dict, Optional

import dotenv

# Load environment variables from .env file
dotenv.load_dotenv()

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
TRUE_VALUES = ("1", "true", "yes", "on")


class Config:
    """
    Configuration class for GrokLab.

    This class handles loading and accessing settings that are not part of an
    experiment's hyperparameters.
    """

    @staticmethod
    def get_setting(name: str, default: Optional[str] = None) -> Optional[str]:
        """
        Get a setting from environment variables.

        Args:
            name (str): The name of the environment variable
            default (str, optional): Value returned when it is unset

        Returns:
            str or None: The setting value
        """
        return os.environ.get(name, default)

    @staticmethod
    def get_flag(name: str) -> bool:
        value = Config.get_setting(name, "")
        return value.strip().lower() in TRUE_VALUES

    @staticmethod
    def get_workers_override() -> Optional[int]:
        """
        Get the worker count that overrides a sweep's parallel_workers.

        Returns:
            int or None: The override, or None if unset or invalid
        """
        value = Config.get_setting("GROKLAB_WORKERS")
        if not value:
            return None
        try:
            workers = int(value)
        except ValueError:
            logger.warning("Ignoring GROKLAB_WORKERS=%r: not an integer", value)
            return None
        if workers < 1:
            logger.warning("Ignoring GROKLAB_WORKERS=%d: must be >= 1", workers)
            return None
        return workers

    @staticmethod
    def get_output_root() -> str:
        """
        Get the parent directory of default output directories.

        Returns:
            str: The output root
        """
        return Config.get_setting("GROKLAB_OUT_DIR", "runs")

    @staticmethod
    def get_log_level() -> str:
        return Config.get_setting("GROKLAB_LOG_LEVEL", "INFO").upper()

    @staticmethod
    def record_wall_time() -> bool:
        """
        Whether summary.json stores the measured wall time.

        Returns:
            bool: False (the default) writes null, so reruns give identical files
        """
        return Config.get_flag("GROKLAB_RECORD_WALL_TIME")

    @staticmethod
    def run_slow_tests() -> bool:
        return Config.get_flag("GROKLAB_RUN_SLOW")

    @staticmethod
    def configure_logging() -> None:
        """Send log records to stderr at the configured level."""
        level = Config.get_log_level()
        if not isinstance(logging.getLevelName(level), int):
            level = "INFO"
        logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)

    @staticmethod
    def get_config() -> Dict[str, Any]:
        """
        Get all configuration settings.

        Returns:
            dict: A dictionary of all configuration settings
        """
        return {
            "workers_override": Config.get_workers_override(),
            "output_root": Config.get_output_root(),
            "log_level": Config.get_log_level(),
            "record_wall_time": Config.record_wall_time(),
            "run_slow_tests": Config.run_slow_tests(),
        }
