from .config_manager import ConfigurationError, ConfigurationManager, RunConfig, parse_run_file

__all__ = ["ConfigurationError", "ConfigurationManager", "RunConfig", "parse_run_file"]
