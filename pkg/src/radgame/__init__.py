"""Gamified radiology training: localization grading by IoU, LLM-judged
report scoring, crossover study orchestration, and exact nonparametric
analytics."""

__version__ = "0.1.0"

from .core import (
    BoundingBox,
    FindingAnnotation,
    FindingClass,
    FindingMode,
    LocalizeCase,
    ReportCase,
    box_area,
    validate_box,
)
from .localize import LocalizeSubmission, SubmissionEntry, grade_case, grade_draw, iou
from .report import (
    CrimsonAssessment,
    StyleAssessment,
    apply_overrides,
    build_crimson_prompt,
    build_style_prompt,
    crimson_score,
    parse_crimson_response,
    parse_style_response,
    style_score,
)
from .analytics import (
    StatResult,
    mann_whitney_u,
    relative_improvement,
    time_curve,
    wilcoxon_signed_rank,
)

__all__ = [
    "__version__",
    "BoundingBox",
    "FindingAnnotation",
    "FindingClass",
    "FindingMode",
    "LocalizeCase",
    "ReportCase",
    "box_area",
    "validate_box",
    "LocalizeSubmission",
    "SubmissionEntry",
    "grade_case",
    "grade_draw",
    "iou",
    "CrimsonAssessment",
    "StyleAssessment",
    "apply_overrides",
    "build_crimson_prompt",
    "build_style_prompt",
    "crimson_score",
    "parse_crimson_response",
    "parse_style_response",
    "style_score",
    "StatResult",
    "mann_whitney_u",
    "relative_improvement",
    "time_curve",
    "wilcoxon_signed_rank",
]
