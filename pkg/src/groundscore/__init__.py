"""Grounding-aware evaluation for visually grounded form extraction.

Scores model outputs jointly on value correctness and evidence
localisation, classifies grounding failure modes, and produces
leaderboards and human-audit packets.
"""

from .geometry import BBox, best_match, iou, iop, to_canonical, to_pixels
from .metrics import (
    FailureMode,
    FieldJudgement,
    ModelScore,
    aggregate,
    grounding_gap,
    judge_document,
    judge_field,
)
from .normalize import CanonicalValue, NormalizationRules, canonicalize, normalized_match
from .schema import (
    FieldSpec,
    FormSchema,
    Violation,
    check_record_fields,
    example_schema,
    load_schema,
)

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "CanonicalValue",
    "FailureMode",
    "FieldJudgement",
    "FieldSpec",
    "FormSchema",
    "ModelScore",
    "NormalizationRules",
    "Violation",
    "aggregate",
    "best_match",
    "canonicalize",
    "check_record_fields",
    "example_schema",
    "grounding_gap",
    "iop",
    "iou",
    "judge_document",
    "judge_field",
    "load_schema",
    "normalized_match",
    "to_canonical",
    "to_pixels",
    "__version__",
]
