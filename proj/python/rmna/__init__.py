"""Rule-mined neighbor aggregation for knowledge-graph link prediction.

Thin wrapper around the C++ extension module; the heavy lifting (rule
mining, attention-based aggregation, convolutional decoding, ranking)
happens in native code.
"""

from ._rmna import (  # noqa: F401
    HornRule,
    KnowledgeGraph,
    PipelineConfig,
    RmnaError,
    RuleMetrics,
    Triple,
    evaluate,
    filter_rules,
    mine_path_rules,
    pretrain_embeddings,
    run_eval,
    run_pipeline,
    run_stage,
)

__all__ = [
    "HornRule",
    "KnowledgeGraph",
    "PipelineConfig",
    "RmnaError",
    "RuleMetrics",
    "Triple",
    "evaluate",
    "filter_rules",
    "mine_path_rules",
    "pretrain_embeddings",
    "run_eval",
    "run_pipeline",
    "run_stage",
]
