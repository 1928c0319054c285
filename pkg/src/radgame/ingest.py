"""Dataset ingestion: consolidate raw exports into canonical playable cases.

Raw localization exports carry one row per (case, label, box/presence); raw
report exports carry one row per study. Ingest maps dataset labels through
taxonomy aliases, normalizes pixel boxes, merges per-case annotations,
excludes report cases that reference prior studies, and curates
difficulty-stratified test sets.
"""

from __future__ import annotations

import csv
import json
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .core import (
    BoundingBox,
    FindingAnnotation,
    FindingClass,
    FindingMode,
    LocalizeCase,
    ReportCase,
    validate_box,
)

# Case-insensitive phrases flagging a reference to a prior study. Cases whose
# findings text matches any of these are not playable.
PRIOR_PHRASES = (
    "prior",
    "previous study",
    "compared to",
    "comparison",
    "interval change",
    "again seen",
    "unchanged from",
)

CasePurpose = ("pretest", "learning", "posttest")


class IngestError(Exception):
    """Unrecoverable ingest failure (unreadable source, bad config)."""


@dataclass(frozen=True)
class TaxonomyConfig:
    """A named set of finding classes with alias consolidation rules."""

    taxonomy_id: str
    classes: tuple[FindingClass, ...]
    default: bool = False

    def __post_init__(self):
        ids = [c.id for c in self.classes]
        if len(ids) != len(set(ids)):
            raise IngestError(f"taxonomy {self.taxonomy_id}: duplicate class ids")
        seen: dict[str, str] = {}
        for c in self.classes:
            for alias in c.aliases:
                key = alias.strip().lower()
                if key in seen and seen[key] != c.id:
                    raise IngestError(
                        f"taxonomy {self.taxonomy_id}: alias {alias!r} maps to "
                        f"both {seen[key]} and {c.id}"
                    )
                seen[key] = c.id

    def class_by_id(self, class_id: str) -> Optional[FindingClass]:
        for c in self.classes:
            if c.id == class_id:
                return c
        return None

    def resolve_label(self, raw_label: str) -> Optional[FindingClass]:
        """Map a raw dataset label to its consolidated class, or None."""
        key = raw_label.strip().lower()
        for c in self.classes:
            if key == c.id or key == c.display_name.lower():
                return c
            if key in (a.strip().lower() for a in c.aliases):
                return c
        return None

    def to_dict(self) -> dict:
        return {
            "taxonomy_id": self.taxonomy_id,
            "default": self.default,
            "classes": [c.to_dict() for c in self.classes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaxonomyConfig":
        return cls(
            taxonomy_id=d["taxonomy_id"],
            classes=tuple(FindingClass.from_dict(c) for c in d["classes"]),
            default=bool(d.get("default", False)),
        )


def load_taxonomy(path: Union[str, Path]) -> TaxonomyConfig:
    with open(path, "r", encoding="utf-8") as f:
        return TaxonomyConfig.from_dict(json.load(f))


def default_taxonomy() -> TaxonomyConfig:
    """The shipped chest X-ray taxonomy: 16 Draw and 6 Select classes."""
    text = resources.files("radgame.assets").joinpath("default_taxonomy.json").read_text()
    return TaxonomyConfig.from_dict(json.loads(text))


@dataclass
class IngestReport:
    """What happened during a load: kept, dropped, and cleaned rows."""

    rows_read: int = 0
    cases_loaded: int = 0
    unmapped_labels: list[dict] = field(default_factory=list)
    clamped_boxes: list[dict] = field(default_factory=list)
    rejected_rows: list[dict] = field(default_factory=list)
    excluded_cases: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "cases_loaded": self.cases_loaded,
            "unmapped_labels": self.unmapped_labels,
            "clamped_boxes": self.clamped_boxes,
            "rejected_rows": self.rejected_rows,
            "excluded_cases": self.excluded_cases,
        }


@dataclass(frozen=True)
class CuratedSet:
    """An ordered case selection for one study phase."""

    set_id: str
    purpose: str  # pretest | learning | posttest
    module: str  # Localize | Report
    case_ids: tuple[str, ...]

    def __post_init__(self):
        if self.purpose not in CasePurpose:
            raise ValueError(f"unknown purpose {self.purpose!r}")

    def to_dict(self) -> dict:
        return {
            "set_id": self.set_id,
            "purpose": self.purpose,
            "module": self.module,
            "case_ids": list(self.case_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CuratedSet":
        return cls(d["set_id"], d["purpose"], d["module"], tuple(d["case_ids"]))


def _read_rows(source: Union[str, Path]) -> list[dict]:
    path = Path(source)
    if not path.exists():
        raise IngestError(f"source not found: {path}")
    try:
        if path.suffix.lower() == ".csv":
            with open(path, newline="", encoding="utf-8") as f:
                return list(csv.DictReader(f))
        with open(path, encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]
    except (OSError, json.JSONDecodeError, csv.Error) as e:
        raise IngestError(f"unreadable source {path}: {e}") from e


def _clamp01(v: float) -> float:
    return min(1.0, max(0.0, v))


def load_localize_dataset(
    source: Union[str, Path],
    taxonomy: TaxonomyConfig,
    units: str = "normalized",
) -> tuple[list[LocalizeCase], IngestReport]:
    """Load a localization export into consolidated cases.

    Rows require: case_id, image_ref, image_width_px, image_height_px, label.
    Draw rows additionally carry x_min/y_min/x_max/y_max in the declared
    units. Multiple boxes for one (case, class) merge into a single
    multi-box annotation. Out-of-bounds boxes are clamped and logged;
    unmapped labels are reported, never silently dropped.
    """
    if units not in ("pixel", "normalized"):
        raise IngestError(f"units must be 'pixel' or 'normalized', got {units!r}")
    report = IngestReport()
    # case_id -> (meta, class_id -> boxes)
    meta: dict[str, dict] = {}
    boxes_by_case: dict[str, dict[str, list[BoundingBox]]] = defaultdict(lambda: defaultdict(list))
    select_by_case: dict[str, set[str]] = defaultdict(set)

    for row in _read_rows(source):
        report.rows_read += 1
        case_id = str(row.get("case_id", "")).strip()
        label = str(row.get("label", "")).strip()
        if not case_id or not label:
            report.rejected_rows.append({"row": row, "reason": "missing case_id or label"})
            continue
        cls = taxonomy.resolve_label(label)
        if cls is None:
            report.unmapped_labels.append({"case_id": case_id, "label": label})
            continue
        width = int(row["image_width_px"])
        height = int(row["image_height_px"])
        meta.setdefault(case_id, {
            "image_ref": row["image_ref"],
            "image_width_px": width,
            "image_height_px": height,
        })
        if cls.mode is FindingMode.SELECT:
            select_by_case[case_id].add(cls.id)
            continue
        try:
            coords = [float(row[k]) for k in ("x_min", "y_min", "x_max", "y_max")]
        except (KeyError, TypeError, ValueError):
            report.rejected_rows.append({"row": row, "reason": "Draw row missing box coordinates"})
            continue
        if units == "pixel":
            coords = [coords[0] / width, coords[1] / height, coords[2] / width, coords[3] / height]
        clamped = [_clamp01(c) for c in coords]
        if clamped != coords:
            report.clamped_boxes.append({"case_id": case_id, "label": label, "raw": coords})
        box = BoundingBox(*clamped)
        violation = validate_box(box)
        if violation is not None:
            report.rejected_rows.append({"row": row, "reason": f"invalid box: {violation}"})
            continue
        boxes_by_case[case_id][cls.id].append(box)

    cases = []
    for case_id in sorted(meta):
        annotations = [
            FindingAnnotation(class_id=cid, boxes=tuple(bxs))
            for cid, bxs in sorted(boxes_by_case.get(case_id, {}).items())
        ]
        annotations += [
            FindingAnnotation(class_id=cid, boxes=())
            for cid in sorted(select_by_case.get(case_id, set()))
        ]
        if not annotations:
            continue
        cases.append(LocalizeCase(case_id=case_id, annotations=tuple(annotations), **meta[case_id]))
    report.cases_loaded = len(cases)
    return cases, report


def mentions_prior(findings: str, phrases: Sequence[str] = PRIOR_PHRASES) -> Optional[str]:
    """Return the first prior-study phrase found in the text, or None."""
    lowered = findings.lower()
    for phrase in phrases:
        if phrase in lowered:
            return phrase
    return None


def load_report_dataset(source: Union[str, Path]) -> tuple[list[ReportCase], IngestReport]:
    """Load a report export, excluding studies that reference priors.

    Rows require: case_id, image_refs (list or ';'-separated), age_years,
    indication, findings.
    """
    report = IngestReport()
    cases = []
    for row in _read_rows(source):
        report.rows_read += 1
        case_id = str(row.get("case_id", "")).strip()
        findings = (row.get("findings") or row.get("reference_findings") or "").strip()
        if not findings:
            report.rejected_rows.append({"case_id": case_id, "reason": "missing findings text"})
            continue
        phrase = mentions_prior(findings)
        if phrase is not None:
            report.excluded_cases.append({"case_id": case_id, "matched_phrase": phrase})
            continue
        refs = row.get("image_refs") or row.get("image_ref")
        if isinstance(refs, str):
            refs = [r for r in refs.split(";") if r]
        try:
            cases.append(ReportCase(
                case_id=case_id,
                image_refs=tuple(refs or ()),
                age_years=int(row["age_years"]),
                indication=str(row.get("indication", "")),
                reference_findings=findings,
                priors_excluded=True,
            ))
        except (KeyError, TypeError, ValueError) as e:
            report.rejected_rows.append({"case_id": case_id, "reason": str(e)})
    report.cases_loaded = len(cases)
    return cases, report


def curate_test_set(
    cases: Sequence,
    n: int,
    seed: int,
    purpose: str = "pretest",
    module: str = "Localize",
    set_id: Optional[str] = None,
) -> CuratedSet:
    """Select n cases stratified evenly across observed difficulty values.

    Each difficulty stratum gets floor(n / #strata) slots (capped at its
    size); leftover slots go round-robin to the largest strata. Deterministic
    for a given (cases, n, seed).
    """
    if n > len(cases):
        raise ValueError(f"requested {n} cases but only {len(cases)} available")
    rng = random.Random(seed)
    strata: dict[int, list] = defaultdict(list)
    for case in sorted(cases, key=lambda c: c.case_id):
        strata[case.difficulty_key].append(case)

    quotas = {d: min(n // len(strata), len(members)) for d, members in strata.items()}
    leftover = n - sum(quotas.values())
    # Largest remaining capacity first; difficulty value breaks ties.
    while leftover > 0:
        order = sorted(
            strata,
            key=lambda d: (-(len(strata[d]) - quotas[d]), d),
        )
        progressed = False
        for d in order:
            if leftover == 0:
                break
            if quotas[d] < len(strata[d]):
                quotas[d] += 1
                leftover -= 1
                progressed = True
        if not progressed:
            raise ValueError("strata exhausted before filling the request")

    selected = []
    for d in sorted(strata):
        selected.extend(rng.sample(strata[d], quotas[d]))
    rng.shuffle(selected)
    return CuratedSet(
        set_id=set_id or f"{module.lower()}-{purpose}-{seed}",
        purpose=purpose,
        module=module,
        case_ids=tuple(c.case_id for c in selected),
    )


def case_distribution(
    cases: Sequence, taxonomy: Optional[TaxonomyConfig] = None
) -> dict:
    """Difficulty histogram plus per-class finding counts split by mode."""
    difficulty = Counter(c.difficulty_key for c in cases)
    draw_counts: Counter = Counter()
    select_counts: Counter = Counter()
    for case in cases:
        for ann in getattr(case, "annotations", ()):
            mode = None
            if taxonomy is not None:
                cls = taxonomy.class_by_id(ann.class_id)
                mode = cls.mode if cls else None
            if mode is None:
                mode = FindingMode.DRAW if ann.boxes else FindingMode.SELECT
            (draw_counts if mode is FindingMode.DRAW else select_counts)[ann.class_id] += 1
    return {
        "difficulty_histogram": dict(sorted(difficulty.items())),
        "draw_finding_counts": dict(sorted(draw_counts.items())),
        "select_finding_counts": dict(sorted(select_counts.items())),
    }


def write_cases_jsonl(cases: Iterable, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for case in cases:
            f.write(json.dumps(case.to_dict()) + "\n")


def read_localize_cases(path: Union[str, Path]) -> list[LocalizeCase]:
    with open(path, encoding="utf-8") as f:
        return [LocalizeCase.from_dict(json.loads(line)) for line in f if line.strip()]


def read_report_cases(path: Union[str, Path]) -> list[ReportCase]:
    with open(path, encoding="utf-8") as f:
        return [ReportCase.from_dict(json.loads(line)) for line in f if line.strip()]
