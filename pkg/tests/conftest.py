import json
import random

import pytest
from PIL import Image

from radgame.core import BoundingBox, FindingAnnotation, LocalizeCase, ReportCase
from radgame.gateway import LlmGateway
from radgame.ingest import default_taxonomy


@pytest.fixture(scope="session")
def taxonomy():
    return default_taxonomy()


# One pass/fail line per release criterion, printed after the test summary.
CRITERION_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if CRITERION_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_RESULTS:
            terminalreporter.write_line(line)


def random_box(rng, min_side=0.05):
    w = rng.uniform(min_side, 0.6)
    h = rng.uniform(min_side, 0.6)
    x = rng.uniform(0, 1 - w)
    y = rng.uniform(0, 1 - h)
    return BoundingBox(x, y, x + w, y + h)


DRAW_IDS = ["nodule_mass", "consolidation", "fracture", "calcification", "tube"]
SELECT_IDS = ["cardiomegaly", "pleural_effusion", "scoliosis"]


def make_localize_cases(n, images_dir, seed=7):
    """Synthetic localize cases with real (tiny) PNG images on disk."""
    rng = random.Random(seed)
    cases = []
    for i in range(n):
        img_path = images_dir / f"loc_{i:03d}.png"
        if not img_path.exists():
            Image.new("RGB", (64, 64), (20, 20, 20)).save(img_path)
        n_draw = rng.randint(1, 3)
        n_select = rng.randint(0, 2)
        annotations = [
            FindingAnnotation(class_id=cid, boxes=(random_box(rng),))
            for cid in rng.sample(DRAW_IDS, n_draw)
        ] + [
            FindingAnnotation(class_id=cid, boxes=())
            for cid in rng.sample(SELECT_IDS, n_select)
        ]
        cases.append(LocalizeCase(
            case_id=f"loc_{i:03d}",
            image_ref=str(img_path),
            image_width_px=64,
            image_height_px=64,
            annotations=tuple(annotations),
        ))
    return cases


def make_report_cases(n, seed=11):
    rng = random.Random(seed)
    findings = [
        "There is cardiomegaly. Bibasilar opacities present, likely atelectasis.",
        "A right upper lobe nodule is present. The heart size is normal.",
        "Left lower lobe consolidation with a small pleural effusion.",
        "Mild interstitial prominence. No effusion. Heart size at the upper limit.",
    ]
    return [
        ReportCase(
            case_id=f"rep_{i:03d}",
            image_refs=(f"images/rep_{i:03d}.png",),
            age_years=rng.randint(20, 90),
            indication="Shortness of breath",
            reference_findings=findings[i % len(findings)],
        )
        for i in range(n)
    ]


def crimson_fixture_text(matched, errors_b=0):
    return json.dumps({
        "Explanation": "Fixture assessment.",
        "ClinicallySignificantErrors": {
            "a": [], "b": [f"missed finding {i}" for i in range(errors_b)],
            "c": [], "d": [],
        },
        "MatchedFindings": [f"finding {i}" for i in range(matched)],
    })


STYLE_FIXTURE = json.dumps({
    "systematic_evaluation_score": 1,
    "organization_language_score": 0.5,
    "systematic_evaluation_recommendation": "",
    "organization_language_recommendation": "Use complete sentences.",
})


def study_stub_gateway(report_cases):
    """Stub with judge+style fixtures per report case and an explainer echo."""
    fixtures = {}
    for i, case in enumerate(report_cases):
        fixtures[case.case_id] = crimson_fixture_text(matched=2, errors_b=i % 3)
        fixtures[f"{case.case_id}#style"] = STYLE_FIXTURE
    return LlmGateway.stubbed(
        fixtures, fallback="The finding appears as a focal density in the boxed region. "
                           "Compare its texture with adjacent lung."
    )
