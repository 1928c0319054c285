"""Grading of Localize submissions against ground truth via the IoU rule.

Everything here is pure: identical inputs give identical results, and
concurrent grading needs no coordination.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .core import BoundingBox, FindingMode, LocalizeCase, require_valid_box
from .ingest import TaxonomyConfig

IOU_THRESHOLD = 0.25


class Outcome(str, Enum):
    CREDITED = "credited"
    MISSED = "missed"
    WRONG_LOCATION = "wrong_location"
    FALSE_POSITIVE = "false_positive"
    TRUE_NEGATIVE = "true_negative"


@dataclass(frozen=True)
class SubmissionEntry:
    """One class in a submission: asserted presence plus any drawn boxes."""

    class_id: str
    asserted: bool
    boxes: tuple[BoundingBox, ...] = ()

    def __post_init__(self):
        if self.boxes and not self.asserted:
            raise ValueError(f"{self.class_id}: boxes present but class not asserted")

    def to_dict(self) -> dict:
        return {
            "class_id": self.class_id,
            "asserted": self.asserted,
            "boxes": [b.to_dict() for b in self.boxes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SubmissionEntry":
        return cls(
            class_id=d["class_id"],
            asserted=bool(d.get("asserted", True)),
            boxes=tuple(BoundingBox.from_dict(b) for b in d.get("boxes", [])),
        )


@dataclass(frozen=True)
class LocalizeSubmission:
    case_id: str
    entries: tuple[SubmissionEntry, ...]
    elapsed_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "entries": [e.to_dict() for e in self.entries],
            "elapsed_seconds": self.elapsed_seconds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LocalizeSubmission":
        return cls(
            case_id=d["case_id"],
            entries=tuple(SubmissionEntry.from_dict(e) for e in d.get("entries", [])),
            elapsed_seconds=float(d.get("elapsed_seconds", 0.0)),
        )


@dataclass(frozen=True)
class DrawGrade:
    """Greedy matching result for one Draw class."""

    credited: bool
    pairs: tuple[tuple[int, int, float], ...]  # (user_idx, gt_idx, iou)
    missed_gt_indices: tuple[int, ...]
    spurious_user_indices: tuple[int, ...]


@dataclass(frozen=True)
class LocalizeCaseResult:
    case_id: str
    outcomes: dict  # class_id -> Outcome
    draw_grades: dict  # class_id -> DrawGrade (Draw classes only)
    case_accuracy: float
    recall: float

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "outcomes": {c: o.value for c, o in self.outcomes.items()},
            "pairs": {
                c: [list(p) for p in g.pairs] for c, g in self.draw_grades.items()
            },
            "missed_gt": {
                c: list(g.missed_gt_indices) for c, g in self.draw_grades.items()
            },
            "case_accuracy": self.case_accuracy,
            "recall": self.recall,
        }


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes; 0 when disjoint."""
    require_valid_box(a)
    require_valid_box(b)
    ix = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    iy = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = ix * iy
    if inter == 0.0:
        return 0.0
    area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min)
    area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min)
    return inter / (area_a + area_b - inter)


def grade_draw(
    user_boxes: Sequence[BoundingBox],
    gt_boxes: Sequence[BoundingBox],
    threshold: float = IOU_THRESHOLD,
) -> DrawGrade:
    """Greedily pair user and ground-truth boxes by descending IoU.

    A pair counts only if its IoU strictly exceeds the threshold; the class
    is credited when at least one ground-truth box is matched.
    """
    if not gt_boxes:
        raise ValueError("gt_boxes must be non-empty for a Draw class")
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0,1), got {threshold}")
    candidates = []
    for ui, ub in enumerate(user_boxes):
        for gi, gb in enumerate(gt_boxes):
            score = iou(ub, gb)
            if score > threshold:
                candidates.append((score, ui, gi))
    candidates.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_user: set[int] = set()
    used_gt: set[int] = set()
    pairs = []
    for score, ui, gi in candidates:
        if ui in used_user or gi in used_gt:
            continue
        used_user.add(ui)
        used_gt.add(gi)
        pairs.append((ui, gi, score))
    return DrawGrade(
        credited=bool(pairs),
        pairs=tuple(pairs),
        missed_gt_indices=tuple(i for i in range(len(gt_boxes)) if i not in used_gt),
        spurious_user_indices=tuple(
            i for i in range(len(user_boxes)) if i not in used_user
        ),
    )


def grade_case(
    submission: LocalizeSubmission,
    case: LocalizeCase,
    taxonomy: TaxonomyConfig,
    threshold: float = IOU_THRESHOLD,
) -> LocalizeCaseResult:
    """Grade every class in the union of ground truth and submission.

    case_accuracy = TP / (TP + FN + FP) over finding classes, where a
    credited class is a TP, a missed or wrong-location class an FN, and an
    asserted-but-absent class an FP. An empty denominator scores 1.
    """
    if submission.case_id != case.case_id:
        raise ValueError(
            f"submission is for {submission.case_id}, case is {case.case_id}"
        )
    entries = {e.class_id: e for e in submission.entries}
    for class_id in entries:
        if taxonomy.class_by_id(class_id) is None:
            raise ValueError(f"unknown class in submission: {class_id}")

    outcomes: dict[str, Outcome] = {}
    draw_grades: dict[str, DrawGrade] = {}

    for ann in case.annotations:
        cls = taxonomy.class_by_id(ann.class_id)
        entry = entries.get(ann.class_id)
        asserted = entry is not None and entry.asserted
        if cls is not None and cls.mode is FindingMode.DRAW:
            grade = grade_draw(entry.boxes if entry else (), ann.boxes, threshold)
            draw_grades[ann.class_id] = grade
            if grade.credited:
                outcomes[ann.class_id] = Outcome.CREDITED
            elif asserted:
                outcomes[ann.class_id] = Outcome.WRONG_LOCATION
            else:
                outcomes[ann.class_id] = Outcome.MISSED
        else:
            outcomes[ann.class_id] = Outcome.CREDITED if asserted else Outcome.MISSED

    gt_ids = {a.class_id for a in case.annotations}
    for class_id, entry in entries.items():
        if class_id in gt_ids:
            continue
        outcomes[class_id] = (
            Outcome.FALSE_POSITIVE if entry.asserted else Outcome.TRUE_NEGATIVE
        )

    tp = sum(1 for o in outcomes.values() if o is Outcome.CREDITED)
    fn = sum(1 for o in outcomes.values() if o in (Outcome.MISSED, Outcome.WRONG_LOCATION))
    fp = sum(1 for o in outcomes.values() if o is Outcome.FALSE_POSITIVE)
    denom = tp + fn + fp
    accuracy = 1.0 if denom == 0 else tp / denom
    gt_count = len(case.annotations)
    recall = 1.0 if gt_count == 0 else tp / gt_count
    return LocalizeCaseResult(
        case_id=case.case_id,
        outcomes=outcomes,
        draw_grades=draw_grades,
        case_accuracy=accuracy,
        recall=recall,
    )
