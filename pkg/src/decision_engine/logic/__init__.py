from .engine import (
    FACT_PRODUCT_PREFIX,
    INFERENCE_PRODUCT,
    DependencyPlan,
    Fact,
    InferenceResult,
    Rule,
    check_rules,
    infer,
    run_inference,
    validate,
)
from .expressions import Expression, evaluate, infer_type, parse_expression

__all__ = [
    "FACT_PRODUCT_PREFIX",
    "INFERENCE_PRODUCT",
    "DependencyPlan",
    "Expression",
    "Fact",
    "InferenceResult",
    "Rule",
    "check_rules",
    "evaluate",
    "infer",
    "infer_type",
    "parse_expression",
    "run_inference",
    "validate",
]
