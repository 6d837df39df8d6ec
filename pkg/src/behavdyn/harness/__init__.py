"""Configuration, command dispatch, sweeps and manifests."""

from .config import ConfigError, RunConfig, dump_config, load_config, parse_config  # noqa: F401
from .runner import (  # noqa: F401
    RunError,
    RunManifest,
    orchestrate_sweep,
    run_command,
    verify_manifest,
)
