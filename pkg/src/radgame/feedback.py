"""Gamified-mode feedback: ground-truth overlays, model explanations for
missed findings, and radiologist validation of those explanations."""

from __future__ import annotations

import csv
import json
import threading
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

from PIL import Image, ImageDraw

from .core import BoundingBox, FindingMode, LocalizeCase, require_valid_box
from .gateway import EXPLAINER, GatewayError, GatewayRequest, ImagePayload, LlmGateway
from .ingest import TaxonomyConfig

DRAW_MISSED = "draw_missed"
DRAW_WRONG_LOCATION = "draw_wrong_location"
SELECT_MISSED = "select_missed"


@dataclass(frozen=True)
class OverlayStyle:
    color: tuple[int, int, int] = (255, 32, 32)
    thickness_px: int = 3


@dataclass(frozen=True)
class FeedbackItem:
    case_id: str
    class_id: str
    kind: str  # draw_missed | draw_wrong_location | select_missed
    explanation_text: str
    overlay_image_ref: Optional[str] = None
    source: str = "model"  # model | fixture

    def __post_init__(self):
        if self.kind in (DRAW_MISSED, DRAW_WRONG_LOCATION) and not self.overlay_image_ref:
            raise ValueError(f"{self.kind} feedback requires an overlay image")
        if self.kind == SELECT_MISSED and self.overlay_image_ref:
            raise ValueError("select_missed feedback carries no overlay")

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "class_id": self.class_id,
            "kind": self.kind,
            "overlay_image_ref": self.overlay_image_ref,
            "explanation_text": self.explanation_text,
            "source": self.source,
        }


def _fallback_descriptions() -> dict[str, str]:
    text = resources.files("radgame.assets").joinpath("fallback_descriptions.json").read_text()
    return json.loads(text)


def _explainer_template(name: str) -> str:
    return resources.files("radgame.assets").joinpath(name).read_text(encoding="utf-8")


def render_overlay(
    image_path: Union[str, Path],
    boxes: Sequence[BoundingBox],
    out_path: Union[str, Path],
    style: OverlayStyle = OverlayStyle(),
) -> Path:
    """Draw rectangle outlines at denormalized pixel coordinates and save.

    The source image content is otherwise unmodified.
    """
    for b in boxes:
        require_valid_box(b)
    try:
        img = Image.open(image_path).convert("RGB")
    except (OSError, ValueError) as e:
        raise ValueError(f"undecodable image {image_path}: {e}") from e
    draw = ImageDraw.Draw(img)
    w, h = img.size
    for b in boxes:
        rect = (b.x_min * w, b.y_min * h, b.x_max * w, b.y_max * h)
        draw.rectangle(rect, outline=style.color, width=style.thickness_px)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    img.save(out_path)
    return out_path


def overlay_path_for(images_dir: Union[str, Path], case_id: str, class_id: str) -> Path:
    return Path(images_dir) / f"{case_id}.{class_id}.overlay.png"


def _explain(
    gateway: LlmGateway,
    prompt: str,
    class_id: str,
    case_id: Optional[str],
    images: tuple[ImagePayload, ...] = (),
) -> tuple[str, str]:
    """Ask the explainer; fall back to the static class description on
    failure so the learning loop stays alive during model outages."""
    try:
        resp = gateway.complete(
            GatewayRequest(role=EXPLAINER, prompt=prompt, images=images, case_id=case_id)
        )
        return resp.text, "model"
    except GatewayError:
        fallback = _fallback_descriptions().get(
            class_id, "Review the highlighted region for this finding."
        )
        return fallback, "fixture"


def make_draw_feedback(
    case: LocalizeCase,
    missed_class_id: str,
    taxonomy: TaxonomyConfig,
    gateway: LlmGateway,
    images_dir: Union[str, Path],
    kind: str = DRAW_MISSED,
    style: OverlayStyle = OverlayStyle(),
) -> FeedbackItem:
    """Overlay the class's ground-truth boxes and request a two-sentence
    visual explanation of the boxed abnormality."""
    cls = taxonomy.class_by_id(missed_class_id)
    if cls is None or cls.mode is not FindingMode.DRAW:
        raise ValueError(f"{missed_class_id} is not a Draw class in this taxonomy")
    ann = case.annotation_for(missed_class_id)
    if ann is None or not ann.boxes:
        raise ValueError(f"case {case.case_id} has no ground-truth boxes for {missed_class_id}")
    out = overlay_path_for(images_dir, case.case_id, missed_class_id)
    render_overlay(case.image_ref, ann.boxes, out, style)
    prompt = _explainer_template("explainer_draw_prompt.txt").replace(
        "{class}", cls.display_name
    )
    image = ImagePayload.from_bytes(out.read_bytes())
    explanation, source = _explain(gateway, prompt, missed_class_id, case.case_id, (image,))
    return FeedbackItem(
        case_id=case.case_id,
        class_id=missed_class_id,
        kind=kind,
        overlay_image_ref=str(out),
        explanation_text=explanation,
        source=source,
    )


def make_select_feedback(
    case_id: str,
    missed_class_id: str,
    taxonomy: TaxonomyConfig,
    gateway: LlmGateway,
) -> FeedbackItem:
    """Request a general description of the missed finding's typical
    radiographic appearance; Select feedback carries no overlay."""
    cls = taxonomy.class_by_id(missed_class_id)
    if cls is None or cls.mode is not FindingMode.SELECT:
        raise ValueError(f"{missed_class_id} is not a Select class in this taxonomy")
    prompt = _explainer_template("explainer_select_prompt.txt").replace(
        "{class}", cls.display_name
    )
    explanation, source = _explain(gateway, prompt, missed_class_id, case_id)
    return FeedbackItem(
        case_id=case_id,
        class_id=missed_class_id,
        kind=SELECT_MISSED,
        explanation_text=explanation,
        source=source,
    )


REVIEW_CRITERIA = ("location_correct", "visual_features_correct", "subtype_correct")


@dataclass(frozen=True)
class FeedbackReview:
    """A radiologist's binary validation of one explanation."""

    feedback_item_ref: str  # "{case_id}.{class_id}"
    reviewer: str
    location_correct: int
    visual_features_correct: int
    subtype_correct: int

    def __post_init__(self):
        for crit in REVIEW_CRITERIA:
            if getattr(self, crit) not in (0, 1):
                raise ValueError(f"{crit} must be 0 or 1")

    def to_dict(self) -> dict:
        return {
            "feedback_item_ref": self.feedback_item_ref,
            "reviewer": self.reviewer,
            **{c: getattr(self, c) for c in REVIEW_CRITERIA},
        }


class ReviewStore:
    """In-memory review log with serialized writes and CSV export."""

    def __init__(self):
        self._reviews: list[FeedbackReview] = []
        self._items: dict[str, FeedbackItem] = {}
        self._lock = threading.Lock()

    def register_item(self, item: FeedbackItem) -> str:
        ref = f"{item.case_id}.{item.class_id}"
        with self._lock:
            self._items[ref] = item
        return ref

    def record_review(self, review: FeedbackReview) -> None:
        with self._lock:
            if review.feedback_item_ref not in self._items:
                raise KeyError(f"no feedback item {review.feedback_item_ref!r}")
            self._reviews.append(review)

    def aggregate_reviews(self, reviewer: Optional[str] = None) -> Optional[dict[str, float]]:
        """Fraction of 1s per criterion over the filtered set; None when empty."""
        with self._lock:
            reviews = [
                r for r in self._reviews if reviewer is None or r.reviewer == reviewer
            ]
        if not reviews:
            return None
        return {
            crit: sum(getattr(r, crit) for r in reviews) / len(reviews)
            for crit in REVIEW_CRITERIA
        }

    def export_csv(self, path: Union[str, Path]) -> None:
        with self._lock:
            rows = [r.to_dict() for r in self._reviews]
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(
                f, fieldnames=["feedback_item_ref", "reviewer", *REVIEW_CRITERIA]
            )
            writer.writeheader()
            writer.writerows(rows)
