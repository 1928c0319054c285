"""Shared domain types: boxes, finding classes, annotations, and playable cases.

All values are immutable after construction and safe to share across
concurrent tasks. Geometry is expressed in normalized fractions of image
width/height so grading is independent of display resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional


class FindingMode(str, Enum):
    DRAW = "Draw"
    SELECT = "Select"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned rectangle with corners as fractions of image size."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def to_dict(self) -> dict:
        return {
            "x_min": self.x_min,
            "y_min": self.y_min,
            "x_max": self.x_max,
            "y_max": self.y_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoundingBox":
        return cls(d["x_min"], d["y_min"], d["x_max"], d["y_max"])


def validate_box(b: BoundingBox) -> Optional[str]:
    """Return None if the box is well-formed, else a description of the
    violated constraint."""
    coords = (b.x_min, b.y_min, b.x_max, b.y_max)
    if not all(isinstance(c, (int, float)) for c in coords):
        return "coordinates must be numeric"
    if not all(0.0 <= c <= 1.0 for c in coords):
        return "coordinates in [0,1]"
    if not b.x_min < b.x_max:
        return "x_min < x_max"
    if not b.y_min < b.y_max:
        return "y_min < y_max"
    return None


def require_valid_box(b: BoundingBox) -> None:
    violation = validate_box(b)
    if violation is not None:
        raise ValueError(f"invalid bounding box: {violation}")


def box_area(b: BoundingBox) -> float:
    """Area as a fraction of the image, in (0, 1]."""
    require_valid_box(b)
    return (b.x_max - b.x_min) * (b.y_max - b.y_min)


@dataclass(frozen=True)
class FindingClass:
    """One finding in a taxonomy. Draw classes require a bounding box;
    Select classes require only a presence tick."""

    id: str
    display_name: str
    mode: FindingMode
    aliases: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "display_name": self.display_name,
            "mode": self.mode.value,
            "aliases": list(self.aliases),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FindingClass":
        return cls(
            id=d["id"],
            display_name=d["display_name"],
            mode=FindingMode(d["mode"]),
            aliases=tuple(d.get("aliases", [])),
        )


@dataclass(frozen=True)
class FindingAnnotation:
    """Ground truth for one finding class in one case.

    Draw-mode annotations carry at least one box; Select-mode annotations
    carry none.
    """

    class_id: str
    boxes: tuple[BoundingBox, ...] = ()
    present: bool = True

    def __post_init__(self):
        for b in self.boxes:
            require_valid_box(b)

    def to_dict(self) -> dict:
        return {"class_id": self.class_id, "boxes": [b.to_dict() for b in self.boxes]}

    @classmethod
    def from_dict(cls, d: dict) -> "FindingAnnotation":
        return cls(
            class_id=d["class_id"],
            boxes=tuple(BoundingBox.from_dict(b) for b in d.get("boxes", [])),
        )


@dataclass(frozen=True)
class LocalizeCase:
    """A playable localization case: one frontal image plus ground truth."""

    case_id: str
    image_ref: str
    image_width_px: int
    image_height_px: int
    annotations: tuple[FindingAnnotation, ...]

    def __post_init__(self):
        class_ids = [a.class_id for a in self.annotations]
        if len(class_ids) != len(set(class_ids)):
            raise ValueError(f"case {self.case_id}: duplicate annotation class_ids")

    @property
    def difficulty_key(self) -> int:
        """Number of distinct ground-truth finding classes."""
        return len(self.annotations)

    def annotation_for(self, class_id: str) -> Optional[FindingAnnotation]:
        for a in self.annotations:
            if a.class_id == class_id:
                return a
        return None

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "image_ref": self.image_ref,
            "image_width_px": self.image_width_px,
            "image_height_px": self.image_height_px,
            "annotations": [a.to_dict() for a in self.annotations],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LocalizeCase":
        return cls(
            case_id=d["case_id"],
            image_ref=d["image_ref"],
            image_width_px=d["image_width_px"],
            image_height_px=d["image_height_px"],
            annotations=tuple(
                FindingAnnotation.from_dict(a) for a in d["annotations"]
            ),
        )


@dataclass(frozen=True)
class ReportCase:
    """A playable report-writing case: study images, patient context, and the
    radiologist's reference findings. Cases referencing prior studies are
    filtered out at ingest; only ``priors_excluded`` cases may be served."""

    case_id: str
    image_refs: tuple[str, ...]
    age_years: int
    indication: str
    reference_findings: str
    priors_excluded: bool = True

    def __post_init__(self):
        if not self.image_refs:
            raise ValueError(f"case {self.case_id}: image_refs must be non-empty")
        if not self.reference_findings:
            raise ValueError(f"case {self.case_id}: reference_findings must be non-empty")
        if self.age_years < 0:
            raise ValueError(f"case {self.case_id}: age_years must be >= 0")

    @property
    def difficulty_key(self) -> int:
        # Report difficulty proxies on reference length; curation strata only
        # need a stable ordinal, not a clinical measure.
        return max(1, len(self.reference_findings.split(".")) - 1)

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "image_refs": list(self.image_refs),
            "age_years": self.age_years,
            "indication": self.indication,
            "reference_findings": self.reference_findings,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReportCase":
        return cls(
            case_id=d["case_id"],
            image_refs=tuple(d["image_refs"]),
            age_years=d["age_years"],
            indication=d["indication"],
            reference_findings=d["reference_findings"],
            priors_excluded=True,
        )
