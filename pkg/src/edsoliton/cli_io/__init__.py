"""Configuration, orchestration and file output."""

from .config import ConfigError, RunConfig, parse_config, parse_config_text
from .run import EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_OK, emit_plotdata, run

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_config_text", "EXIT_CONFIG",
           "EXIT_CONVERGENCE", "EXIT_OK", "emit_plotdata", "run"]
