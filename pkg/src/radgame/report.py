"""Report grading: judge prompts, response parsing, scoring, and overrides.

The clinical score is matched findings over matched findings plus the four
clinically significant error categories (a: false report, b: missing
finding, c: wrong location, d: wrong severity), scaled to a percent. The
style score averages two 0/0.5/1 pillars (systematic coverage,
organization/language) scaled to 100.

Prompt templates live as versioned text assets and are substituted with
plain string replacement so literal braces in the templates survive intact.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

ERROR_CATEGORIES = ("a", "b", "c", "d")
STYLE_SCALE = (0.0, 0.5, 1.0)


class JudgeResponseError(Exception):
    """The judge's output could not be parsed into a valid assessment."""


def _asset(name: str) -> str:
    return resources.files("radgame.assets").joinpath(name).read_text(encoding="utf-8")


def crimson_template() -> str:
    return _asset("crimson_prompt.txt")


def style_template() -> str:
    return _asset("style_prompt.txt")


def build_crimson_prompt(
    age_years: int, indication: str, reference: str, candidate: str
) -> str:
    """Fill the clinical-judgment template. Only the four placeholder slots
    change; all other template bytes are preserved."""
    if not reference.strip():
        raise ValueError("reference report must be non-empty")
    if not candidate.strip():
        raise ValueError("candidate report must be non-empty")
    return (
        crimson_template()
        .replace("{age}", str(age_years))
        .replace("{indication}", indication)
        .replace("{reference}", reference)
        .replace("{candidate}", candidate)
    )


def build_style_prompt(candidate: str) -> str:
    if not candidate.strip():
        raise ValueError("candidate report must be non-empty")
    return style_template().replace("{candidate}", candidate)


@dataclass(frozen=True)
class CrimsonAssessment:
    explanation: str
    errors_a: tuple[str, ...]
    errors_b: tuple[str, ...]
    errors_c: tuple[str, ...]
    errors_d: tuple[str, ...]
    matched_findings: tuple[str, ...]

    @property
    def error_count(self) -> int:
        return sum(len(e) for e in (self.errors_a, self.errors_b, self.errors_c, self.errors_d))

    def errors(self, category: str) -> tuple[str, ...]:
        if category not in ERROR_CATEGORIES:
            raise ValueError(f"unknown error category {category!r}")
        return getattr(self, f"errors_{category}")

    def to_dict(self) -> dict:
        return {
            "Explanation": self.explanation,
            "ClinicallySignificantErrors": {
                c: list(self.errors(c)) for c in ERROR_CATEGORIES
            },
            "MatchedFindings": list(self.matched_findings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CrimsonAssessment":
        errors = d["ClinicallySignificantErrors"]
        return cls(
            explanation=d.get("Explanation", ""),
            errors_a=tuple(errors["a"]),
            errors_b=tuple(errors["b"]),
            errors_c=tuple(errors["c"]),
            errors_d=tuple(errors["d"]),
            matched_findings=tuple(d["MatchedFindings"]),
        )


@dataclass(frozen=True)
class StyleAssessment:
    systematic_evaluation_score: float
    organization_language_score: float
    systematic_evaluation_recommendation: str = ""
    organization_language_recommendation: str = ""

    def to_dict(self) -> dict:
        return {
            "systematic_evaluation_score": self.systematic_evaluation_score,
            "organization_language_score": self.organization_language_score,
            "systematic_evaluation_recommendation": self.systematic_evaluation_recommendation,
            "organization_language_recommendation": self.organization_language_recommendation,
        }


_FENCE_RE = re.compile(r"```(?:json)?", re.IGNORECASE)


def extract_json_object(text: str) -> dict:
    """Pull the first JSON object out of possibly prose-wrapped model output."""
    cleaned = _FENCE_RE.sub("", text)
    start = cleaned.find("{")
    if start == -1:
        raise JudgeResponseError("no JSON object found in response")
    decoder = json.JSONDecoder()
    while start != -1:
        try:
            obj, _ = decoder.raw_decode(cleaned[start:])
            if isinstance(obj, dict):
                return obj
        except json.JSONDecodeError:
            pass
        start = cleaned.find("{", start + 1)
    raise JudgeResponseError("no parseable JSON object found in response")


def parse_crimson_response(text: str) -> CrimsonAssessment:
    obj = extract_json_object(text)
    if "ClinicallySignificantErrors" not in obj:
        raise JudgeResponseError("missing key 'ClinicallySignificantErrors'")
    if "MatchedFindings" not in obj:
        raise JudgeResponseError("missing key 'MatchedFindings'")
    errors = obj["ClinicallySignificantErrors"]
    if not isinstance(errors, dict):
        raise JudgeResponseError("'ClinicallySignificantErrors' must be an object")
    for cat in ERROR_CATEGORIES:
        if cat not in errors:
            raise JudgeResponseError(f"missing error category {cat!r}")
        if not isinstance(errors[cat], list):
            raise JudgeResponseError(f"error category {cat!r} must be a list")
    if not isinstance(obj["MatchedFindings"], list):
        raise JudgeResponseError("'MatchedFindings' must be a list")
    return CrimsonAssessment(
        explanation=str(obj.get("Explanation", "")),
        errors_a=tuple(str(e) for e in errors["a"]),
        errors_b=tuple(str(e) for e in errors["b"]),
        errors_c=tuple(str(e) for e in errors["c"]),
        errors_d=tuple(str(e) for e in errors["d"]),
        matched_findings=tuple(str(m) for m in obj["MatchedFindings"]),
    )


def parse_style_response(text: str) -> StyleAssessment:
    obj = extract_json_object(text)
    scores = {}
    for key in ("systematic_evaluation_score", "organization_language_score"):
        if key not in obj:
            raise JudgeResponseError(f"missing key {key!r}")
        value = float(obj[key])
        if value not in STYLE_SCALE:
            raise JudgeResponseError(f"{key} must be one of {STYLE_SCALE}, got {value}")
        scores[key] = value
    return StyleAssessment(
        systematic_evaluation_score=scores["systematic_evaluation_score"],
        organization_language_score=scores["organization_language_score"],
        systematic_evaluation_recommendation=str(
            obj.get("systematic_evaluation_recommendation", "")
        ),
        organization_language_recommendation=str(
            obj.get("organization_language_recommendation", "")
        ),
    )


def crimson_score(assessment: CrimsonAssessment) -> float:
    """Percent score: 100 * M / (M + E). A report with no matched findings
    and no errors has nothing clinically discrepant, so it scores 100."""
    m = len(assessment.matched_findings)
    e = assessment.error_count
    if m + e == 0:
        return 100.0
    return 100.0 * m / (m + e)


def style_score(sa: StyleAssessment) -> float:
    """Mean of the two pillars, scaled to 0..100."""
    return 100.0 * (sa.systematic_evaluation_score + sa.organization_language_score) / 2.0


@dataclass(frozen=True)
class Override:
    """A radiologist's correction to one judged error.

    error_ref is (category, index) into the assessment's error lists, with
    the error text snapshotted so the audit trail survives reordering.
    """

    category: str
    index: int
    action: str  # "remove" or "reclassify-to:<a|b|c|d>"
    reviewer: str
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "index": self.index,
            "action": self.action,
            "reviewer": self.reviewer,
            "reason": self.reason,
        }


@dataclass(frozen=True)
class ReportGrade:
    crimson_percent: float
    style_percent: Optional[float]
    assessment: CrimsonAssessment
    style_assessment: Optional[StyleAssessment] = None
    original_assessment: Optional[CrimsonAssessment] = None
    override_log: tuple[dict, ...] = ()

    def to_dict(self) -> dict:
        return {
            "crimson_percent": self.crimson_percent,
            "style_percent": self.style_percent,
            "assessment": self.assessment.to_dict(),
            "style_assessment": self.style_assessment.to_dict() if self.style_assessment else None,
            "override_log": list(self.override_log),
        }


def grade_from_assessments(
    assessment: CrimsonAssessment, style_assessment: Optional[StyleAssessment] = None
) -> ReportGrade:
    return ReportGrade(
        crimson_percent=crimson_score(assessment),
        style_percent=style_score(style_assessment) if style_assessment else None,
        assessment=assessment,
        style_assessment=style_assessment,
        original_assessment=assessment,
    )


def apply_overrides(
    assessment: CrimsonAssessment,
    overrides: Sequence[Override],
    style_assessment: Optional[StyleAssessment] = None,
) -> ReportGrade:
    """Recompute the grade after radiologist review.

    Overrides resolve against the original assessment's error positions.
    The original assessment is preserved; every override is appended to the
    audit log with the affected error text.
    """
    lists = {c: list(assessment.errors(c)) for c in ERROR_CATEGORIES}
    # Mark-then-rebuild so multiple overrides against original indices work.
    marks: dict[str, list[Optional[str]]] = {
        c: [None] * len(lists[c]) for c in ERROR_CATEGORIES
    }
    log = []
    for ov in overrides:
        if ov.category not in ERROR_CATEGORIES:
            raise ValueError(f"unknown category {ov.category!r}")
        if not 0 <= ov.index < len(lists[ov.category]):
            raise ValueError(
                f"dangling error_ref: {ov.category}[{ov.index}] does not exist"
            )
        if ov.action == "remove":
            marks[ov.category][ov.index] = "remove"
        elif ov.action.startswith("reclassify-to:"):
            target = ov.action.split(":", 1)[1]
            if target not in ERROR_CATEGORIES:
                raise ValueError(f"unknown reclassify target {target!r}")
            marks[ov.category][ov.index] = target
        else:
            raise ValueError(f"unknown override action {ov.action!r}")
        log.append({**ov.to_dict(), "error_text": lists[ov.category][ov.index]})

    edited = {c: [] for c in ERROR_CATEGORIES}
    for c in ERROR_CATEGORIES:
        for i, text in enumerate(lists[c]):
            mark = marks[c][i]
            if mark == "remove":
                continue
            edited[mark if mark else c].append(text)

    revised = CrimsonAssessment(
        explanation=assessment.explanation,
        errors_a=tuple(edited["a"]),
        errors_b=tuple(edited["b"]),
        errors_c=tuple(edited["c"]),
        errors_d=tuple(edited["d"]),
        matched_findings=assessment.matched_findings,
    )
    return ReportGrade(
        crimson_percent=crimson_score(revised),
        style_percent=style_score(style_assessment) if style_assessment else None,
        assessment=revised,
        style_assessment=style_assessment,
        original_assessment=assessment,
        override_log=tuple(log),
    )
