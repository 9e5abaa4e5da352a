"""Collaborative query rewriting: Python front end to the C++ core.

Stage functions take a work directory and an optional dict of config
settings (the same keys as the config file, e.g. ``{"world.num_users": 50}``).
"""

from ._cqr import (
    Graph,
    MissingArtifact,
    RewriteService,
    build_graph,
    build_index,
    config_items,
    encode,
    evaluate,
    export_finetune,
    mine_opportunity_pairs,
    normalize_utterance,
    normalized_edit_distance,
    predict_links,
    read_prediction_requests,
    read_predictions,
    similarity,
    synth,
    token_set_jaccard,
    write_prediction_response,
)

__all__ = [
    "Graph",
    "MissingArtifact",
    "RewriteService",
    "build_graph",
    "build_index",
    "config_items",
    "encode",
    "evaluate",
    "export_finetune",
    "mine_opportunity_pairs",
    "normalize_utterance",
    "normalized_edit_distance",
    "predict_links",
    "read_prediction_requests",
    "read_predictions",
    "run_pipeline",
    "similarity",
    "synth",
    "token_set_jaccard",
    "write_prediction_response",
]


def run_pipeline(work_dir, settings=None, mode="cooccurrence"):
    """synth, build_graph, link prediction (unless traversal), build_index and
    evaluate. Returns the metrics report as JSON Lines text."""
    settings = dict(settings or {})
    synth(work_dir, settings)
    build_graph(work_dir, settings)
    if mode != "traversal":
        predict_links(work_dir, settings)
    build_index(work_dir, settings, mode=mode)
    return evaluate(work_dir, settings, coverage=True, metrics=True, format="jsonl")
