"""Config-driven experiments, manifests and the ``londonlimit`` CLI."""

from ..fitting import SlopeFit, fit_slope
from .cli import main, resolve_threads, run
from .config import ConfigError, RunConfig, load_config, parse_config
from .manifest import Check, RunManifest, load_manifest, reevaluate
from .presets import FAST, PRESETS

__all__ = [
    "Check", "ConfigError", "FAST", "PRESETS", "RunConfig", "RunManifest", "SlopeFit",
    "fit_slope", "load_config", "load_manifest", "main", "parse_config", "reevaluate",
    "resolve_threads", "run",
]
