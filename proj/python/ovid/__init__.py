"""Changeset vandalism detection for OpenStreetMap."""

from ._core import (
    Checkpoint,
    FeatureFile,
    OvidError,
    Store,
    __version__,
    extract_changeset_ids,
    metrics,
    mine,
    parse_config,
    pr_sweep,
    train,
)

__all__ = [
    "Checkpoint",
    "FeatureFile",
    "OvidError",
    "Store",
    "__version__",
    "extract_changeset_ids",
    "metrics",
    "mine",
    "parse_config",
    "pr_sweep",
    "train",
]
