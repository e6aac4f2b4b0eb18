"""Knowledge-grounded multimodal two-stage reasoning: python surface."""

from ._core import (
    BudgetError,
    ConfigError,
    Extractor,
    GraphEncoder,
    KnowledgeBase,
    NUM_EDGE_TYPES,
    NUM_RELATION_GROUPS,
    NumericError,
    ParseError,
    ShapeError,
    accuracy,
    cross_attend,
    fuse,
    fusion_param_count,
    matmul,
    rouge_l,
    sigmoid,
    softmax_rows,
    tokenize,
)

__all__ = [
    "BudgetError",
    "ConfigError",
    "Extractor",
    "GraphEncoder",
    "KnowledgeBase",
    "NUM_EDGE_TYPES",
    "NUM_RELATION_GROUPS",
    "NumericError",
    "ParseError",
    "ShapeError",
    "accuracy",
    "cross_attend",
    "fuse",
    "fusion_param_count",
    "matmul",
    "rouge_l",
    "sigmoid",
    "softmax_rows",
    "tokenize",
]
