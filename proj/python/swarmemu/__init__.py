"""Python front end for the swarmemu NVMe device emulator.

Configs are nested dicts with the same keys as the JSON config file; any
subset may be given and the rest keeps its default.
"""

import json

from . import _core
from ._core import ConfigError, copy_engine_bench, csv_header, derive_params, read_block, schedule_batch

__all__ = [
    "ConfigError",
    "ablation",
    "copy_engine_bench",
    "csv_header",
    "default_config",
    "derive_params",
    "read_block",
    "run",
    "schedule_batch",
    "validate",
]


def default_config():
    return json.loads(_core.default_config())


def run(config=None):
    """Runs one experiment and returns its report as a dict."""
    return json.loads(_core.run(json.dumps(config) if config else ""))


def ablation(kind, config=None):
    """Runs the frontend, timing or skew matrix; returns one report per row."""
    if kind not in ("frontend", "timing", "skew"):
        raise ValueError(f"unknown ablation {kind!r}")
    return json.loads(_core.ablation(kind, json.dumps(config) if config else ""))


def validate(seed=42, only=(), inject_min_delay_fault=False):
    """Runs the acceptance checks; returns a list of result dicts."""
    return json.loads(_core.validate(seed, list(only), inject_min_delay_fault))
