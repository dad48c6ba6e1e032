"""Knowledge-anchor FAQ matching."""

import json

from ._kaqa import (
    AnchorConfig,
    DataError,
    KnowledgeGraph,
    MatchSession,
    NtdModel,
    TrainingError,
    UsageError,
    anchor_json,
    auc,
    load_anchor_config,
    load_kg,
    run_cli,
    split_sizes,
    synthetic_kg,
    tokenize,
)


def anchor(text, kg, config, ntd=None, explain=False):
    """Anchors `text` and returns the decoded JSON anchor set."""
    return json.loads(anchor_json(text, kg, config, ntd, explain))


__all__ = [
    "AnchorConfig",
    "DataError",
    "KnowledgeGraph",
    "MatchSession",
    "NtdModel",
    "TrainingError",
    "UsageError",
    "anchor",
    "anchor_json",
    "auc",
    "load_anchor_config",
    "load_kg",
    "run_cli",
    "split_sizes",
    "synthetic_kg",
    "tokenize",
]
