"""Robust adaptive dynamic programming.

Configs are the sectioned text files in configs/. `run` returns a summary
dict; `execute` also writes the run directory that `replay` checks.
"""

from ._core import (
    Config,
    RadpError,
    check_gains,
    execute,
    load_config,
    oracle,
    parse_config,
    replay,
    run,
)

__all__ = [
    "Config",
    "RadpError",
    "check_gains",
    "execute",
    "load_config",
    "oracle",
    "parse_config",
    "replay",
    "run",
]
