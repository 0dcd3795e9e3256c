"""Distributed HNSW over an emulated disaggregated-memory fabric."""

import json

from ._core import (
    Index,
    brute_force_knn,
    csp,
    gen_synthetic,
    node_size,
    payload_size,
    recall_at_k,
    setting_names,
    settings,
    update_limits,
)
from ._core import run_json as _run_json

__all__ = [
    "Index",
    "brute_force_knn",
    "csp",
    "gen_synthetic",
    "node_size",
    "payload_size",
    "recall_at_k",
    "run",
    "setting_names",
    "settings",
    "update_limits",
]


def run(preset="desk", **overrides):
    """Run one experiment; keyword arguments override preset settings."""
    return json.loads(_run_json(preset, {k: str(v) for k, v in overrides.items()}))
