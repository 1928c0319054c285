"""Acceptance suite: one test per release criterion, each emitting a single
pass/fail line. Oracles here are computed independently of the library code
(pixel counting, brute-force enumeration, hand-labeled fixtures)."""

import itertools
import json
import random
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

from radgame.core import BoundingBox, FindingAnnotation, LocalizeCase
from radgame.ingest import (
    curate_test_set,
    default_taxonomy,
    load_localize_dataset,
    load_report_dataset,
)
from radgame.localize import grade_draw, iou
from radgame.analytics import (
    export_outcomes,
    mann_whitney_u,
    relative_improvement,
    wilcoxon_signed_rank,
)
from radgame.report import (
    CrimsonAssessment,
    JudgeResponseError,
    StyleAssessment,
    build_crimson_prompt,
    crimson_score,
    crimson_template,
    parse_crimson_response,
    parse_style_response,
    style_score,
    style_template,
)
from radgame.study import (
    GROUP_GAMIFIED,
    GROUP_TRADITIONAL,
    LEARNING,
    MODULE_LOCALIZE,
    MODULE_REPORT,
    DONE,
    POSTTEST,
    PRETEST,
    StudyConfig,
    StudyEngine,
    replay,
)
from radgame.localize import LocalizeSubmission, SubmissionEntry

from conftest import make_localize_cases, make_report_cases, study_stub_gateway
from test_analytics import oracle_mwu_p, oracle_wilcoxon_p


@contextmanager
def criterion(name):
    """Emit exactly one pass/fail line per criterion in the run summary."""
    import conftest

    try:
        yield
    except BaseException:
        conftest.CRITERION_RESULTS.append(f"[FAIL] {name}")
        print(f"[FAIL] {name}", file=sys.stderr)
        raise
    conftest.CRITERION_RESULTS.append(f"[PASS] {name}")


# -- 1. IoU engine vs pixel-grid counting oracle -----------------------------

GRID = 1000


def _random_grid_box(rng):
    # edges on the 1/1000 grid so the pixel-counting oracle is exact
    x1 = rng.randrange(0, GRID - 1)
    x2 = rng.randrange(x1 + 1, GRID)
    y1 = rng.randrange(0, GRID - 1)
    y2 = rng.randrange(y1 + 1, GRID)
    return BoundingBox(x1 / GRID, y1 / GRID, x2 / GRID, y2 / GRID)


def _pixel_count_iou(a, b):
    """Count covered pixel centers on a 1000x1000 grid (separable axes)."""
    centers = (np.arange(GRID) + 0.5) / GRID
    ax = (centers > a.x_min) & (centers < a.x_max)
    ay = (centers > a.y_min) & (centers < a.y_max)
    bx = (centers > b.x_min) & (centers < b.x_max)
    by = (centers > b.y_min) & (centers < b.y_max)
    area_a = int(ax.sum()) * int(ay.sum())
    area_b = int(bx.sum()) * int(by.sum())
    inter = int((ax & bx).sum()) * int((ay & by).sum())
    union = area_a + area_b - inter
    return inter / union


def test_iou_engine_against_pixel_grid_oracle():
    with criterion("IoU engine: 10,000 pairs vs 1000x1000 pixel-grid oracle"):
        rng = random.Random(2024)
        start = time.monotonic()
        worst = 0.0
        for _ in range(10_000):
            a, b = _random_grid_box(rng), _random_grid_box(rng)
            analytic = iou(a, b)
            oracle = _pixel_count_iou(a, b)
            worst = max(worst, abs(analytic - oracle))
            assert abs(analytic - oracle) <= 2e-3
            assert iou(a, b) == iou(b, a)
            assert iou(a, a) == 1.0
        elapsed = time.monotonic() - start
        assert worst <= 2e-3
        assert elapsed < 10.0, f"took {elapsed:.1f}s"


# -- 2. threshold semantics --------------------------------------------------

def test_threshold_semantics():
    with criterion("Threshold semantics: IoU 0.25 not credited, 0.2500001 credited"):
        user = [BoundingBox(0, 0, 0.1, 0.1)]
        gt_exact = [BoundingBox(0, 0, 0.1, 0.4)]  # IoU = 0.01/0.04 = 0.25
        assert iou(user[0], gt_exact[0]) == pytest.approx(0.25, abs=1e-15)
        assert not grade_draw(user, gt_exact).credited
        gt_over = [BoundingBox(0, 0, 0.1, 0.1 / 0.2500001)]
        assert iou(user[0], gt_over[0]) > 0.25
        assert grade_draw(user, gt_over).credited


# -- 3. CRIMSON formula ------------------------------------------------------

def _assessment(a=(), b=(), c=(), d=(), matched=()):
    return CrimsonAssessment("", tuple(a), tuple(b), tuple(c), tuple(d), tuple(matched))


def test_crimson_formula_and_monotonicity():
    with criterion("CRIMSON: 0-matched/1-missing -> 0%; 2-matched/0-errors -> 100%; monotone over 1,000 assessments"):
        assert crimson_score(_assessment(b=["missed finding"])) == 0.0
        assert crimson_score(_assessment(matched=["f1", "f2"])) == 100.0
        rng = random.Random(77)
        for _ in range(1000):
            counts = [rng.randint(0, 4) for _ in range(4)]
            m = rng.randint(0, 6)
            base = _assessment(
                ["e"] * counts[0], ["e"] * counts[1], ["e"] * counts[2],
                ["e"] * counts[3], [f"m{i}" for i in range(m)],
            )
            s = crimson_score(base)
            assert 0.0 <= s <= 100.0
            cat = rng.choice(["a", "b", "c", "d"])
            bumped = {k: list(getattr(base, f"errors_{k}")) for k in "abcd"}
            bumped[cat].append("extra")
            worse = _assessment(bumped["a"], bumped["b"], bumped["c"],
                                bumped["d"], base.matched_findings)
            better = _assessment(base.errors_a, base.errors_b, base.errors_c,
                                 base.errors_d, base.matched_findings + ("extra",))
            assert crimson_score(worse) <= s
            assert crimson_score(better) >= s


# -- 4. prompt fidelity ------------------------------------------------------

def test_prompt_fidelity():
    with criterion("Prompt fidelity: golden bytes and header substitution"):
        from pathlib import Path

        golden = Path(__file__).parent / "golden"
        assert crimson_template() == (golden / "crimson_prompt.txt").read_text()
        assert style_template() == (golden / "style_prompt.txt").read_text()
        prompt = build_crimson_prompt(
            90, "Wrist fracture, shortness of breath",
            "There is cardiomegaly. Bibasilar opacities present, likely atelectasis.",
            "The heart is enlarged.",
        )
        assert "Age: 90" in prompt
        assert "Indication: Wrist fracture, shortness of breath" in prompt
        for slot in ("{age}", "{indication}", "{reference}", "{candidate}"):
            assert slot not in prompt
        # everything outside the four slots is untouched
        restored = (
            prompt.replace("Age: 90", "Age: {age}", 1)
            .replace("Indication: Wrist fracture, shortness of breath",
                     "Indication: {indication}", 1)
            .replace("Reference Report: There is cardiomegaly. Bibasilar opacities "
                     "present, likely atelectasis.",
                     "Reference Report: {reference}", 1)
            .replace("Candidate Report: The heart is enlarged.",
                     "Candidate Report: {candidate}", 1)
        )
        assert restored == crimson_template()


# -- 5. style score ----------------------------------------------------------

def test_style_score_scale():
    with criterion("Style score: (1,1)->100, (0,0)->0, (1,0.5)->75, out-of-scale rejected"):
        assert style_score(StyleAssessment(1, 1)) == 100.0
        assert style_score(StyleAssessment(0, 0)) == 0.0
        assert style_score(StyleAssessment(1, 0.5)) == 75.0
        with pytest.raises(JudgeResponseError):
            parse_style_response(json.dumps({
                "systematic_evaluation_score": 0.7,
                "organization_language_score": 1,
            }))


# -- 6. statistics vs brute-force oracles ------------------------------------

def test_statistics_match_enumeration_oracles():
    with criterion("Statistics: exact agreement with brute-force oracles to 1e-12"):
        start = time.monotonic()
        res = mann_whitney_u([1, 2], [3, 4], "two")
        assert res.p_value == pytest.approx(1 / 3, abs=1e-15)
        res = wilcoxon_signed_rank([0, 0, 0], [1, 2, 3], "one")
        assert res.p_value == pytest.approx(1 / 8, abs=1e-15)

        rng = random.Random(501)
        for m in range(1, 10):
            for n in range(1, 10):
                if m + n > 10:
                    continue
                for _ in range(3):
                    x = [rng.randint(0, 4) for _ in range(m)]
                    y = [rng.randint(0, 4) for _ in range(n)]
                    for sided in ("one", "two"):
                        got = mann_whitney_u(x, y, sided)
                        assert got.method == "exact"
                        assert got.p_value == pytest.approx(
                            oracle_mwu_p(x, y, sided), abs=1e-12
                        ), (x, y, sided)
        for n in range(1, 13):
            for _ in range(3):
                pre = [rng.randint(0, 4) for _ in range(n)]
                post = [p + rng.randint(-2, 3) for p in pre]
                if all(a == b for a, b in zip(pre, post)):
                    post[0] += 1
                for sided in ("one", "two"):
                    got = wilcoxon_signed_rank(pre, post, sided)
                    assert got.method == "exact"
                    assert got.p_value == pytest.approx(
                        oracle_wilcoxon_p(pre, post, sided), abs=1e-12
                    ), (pre, post, sided)
        assert time.monotonic() - start < 60.0


# -- 7. end-to-end stubbed study + 9. replay ---------------------------------

def _e2e_run(tmp_path):
    tmp_path.mkdir(parents=True, exist_ok=True)
    localize = make_localize_cases(40, tmp_path)
    report = make_report_cases(20)
    config = StudyConfig(
        localize_phase_sizes=(5, 10, 5),
        report_phase_sizes=(3, 6, 3),
        overlays_dir=str(tmp_path / "overlays"),
    )
    engine = StudyEngine(
        config, default_taxonomy(), localize, report,
        gateway=study_stub_gateway(report), clock=lambda: 500.0,
    )
    engine.init_study([f"p{i}" for i in range(6)], seed=33)
    responses = {"test": [], "learning": {}}

    def localize_submission(case_id, keep):
        case = engine.localize_cases[case_id]
        entries = tuple(
            SubmissionEntry(a.class_id, True, a.boxes)
            for a in case.annotations[:keep if keep else len(case.annotations)]
        )
        return LocalizeSubmission(case_id, entries).to_dict()

    for pid in engine.assignments:
        for module in (MODULE_LOCALIZE, MODULE_REPORT):
            group = engine.assignments[pid].group_for(module)
            for phase in (PRETEST, LEARNING, POSTTEST):
                engine.start_phase(pid, module, phase)
                while (cid := engine.current_case_id(pid, module)) is not None:
                    if module == MODULE_LOCALIZE:
                        # deliberately weaker pre-test: keep only one finding
                        keep = 1 if phase == PRETEST else 0
                        sub = localize_submission(cid, keep)
                    else:
                        sub = {"candidate_text": "The heart is enlarged. Lungs clear."}
                    resp = engine.submit(pid, module, cid, sub, elapsed_seconds=25.0)
                    if phase in (PRETEST, POSTTEST):
                        responses["test"].append(resp)
                    elif phase == LEARNING:
                        responses["learning"].setdefault((module, group), []).append(resp)
                engine.advance(pid, module)
    return engine, responses


def test_end_to_end_stubbed_study(tmp_path):
    with criterion("End-to-end stubbed study: 6 participants to Done, gated responses, deterministic export"):
        start = time.monotonic()
        engine, responses = _e2e_run(tmp_path / "run1")

        for (pid, module), s in engine.sessions.items():
            assert s.phase == DONE, f"{pid}/{module} stuck in {s.phase}"

        score_fields = {"grade", "feedback", "ground_truth", "crimson_percent",
                        "style_percent", "assessment", "case_accuracy"}
        for resp in responses["test"]:
            assert set(resp) == {"status", "case_id"}
            assert not score_fields & set(resp)
        for resp in responses["learning"][(MODULE_LOCALIZE, GROUP_GAMIFIED)]:
            assert "grade" in resp and "feedback" in resp
        for resp in responses["learning"][(MODULE_LOCALIZE, GROUP_TRADITIONAL)]:
            assert set(resp) == {"case_id", "ground_truth"}
        for resp in responses["learning"][(MODULE_REPORT, GROUP_GAMIFIED)]:
            assert resp["crimson_percent"] is not None
        for resp in responses["learning"][(MODULE_REPORT, GROUP_TRADITIONAL)]:
            assert set(resp) == {"case_id", "reference_findings"}

        rows = engine.outcomes()
        assert len(rows) == 12  # 6 participants x 2 modules
        improvements = {
            (r.participant_id, r.module): relative_improvement(r.pre_score, r.post_score)
            for r in rows
        }
        for r in rows:
            if r.module == MODULE_LOCALIZE:
                assert r.post_score > r.pre_score  # weak pre-test by construction

        # a second run over identical inputs exports identical bytes
        engine2, _ = _e2e_run(tmp_path / "run2")
        out1 = export_outcomes(rows, tmp_path / "o1.csv", "csv")
        out2 = export_outcomes(engine2.outcomes(), tmp_path / "o2.csv", "csv")
        assert out1.read_bytes() == out2.read_bytes()
        improvements2 = {
            (r.participant_id, r.module): relative_improvement(r.pre_score, r.post_score)
            for r in engine2.outcomes()
        }
        assert improvements == improvements2
        assert time.monotonic() - start < 120.0


def test_event_log_replay_reproduces_state(tmp_path):
    with criterion("Event-log replay reproduces identical session state byte-for-byte"):
        engine, _ = _e2e_run(tmp_path / "run")
        rebuilt = replay(
            engine.config, engine.taxonomy,
            list(engine.localize_cases.values()),
            list(engine.report_cases.values()),
            engine.log.events,
        )
        assert rebuilt.snapshot() == engine.snapshot()


# -- 8. ingest fixtures ------------------------------------------------------

CONSOLIDATION_FIXTURE = [
    {"case_id": "p1", "image_ref": "p1.png", "image_width_px": 1000,
     "image_height_px": 1000, "label": "lobar atelectasis",
     "x_min": 0, "y_min": 0, "x_max": 500, "y_max": 500},
    {"case_id": "p1", "image_ref": "p1.png", "image_width_px": 1000,
     "image_height_px": 1000, "label": "Atelectasis/Fibrotic band",
     "x_min": 600, "y_min": 600, "x_max": 900, "y_max": 900},
    {"case_id": "p1", "image_ref": "p1.png", "image_width_px": 1000,
     "image_height_px": 1000, "label": "cardiomegaly"},
    {"case_id": "p2", "image_ref": "p2.png", "image_width_px": 1000,
     "image_height_px": 1000, "label": "laminar atelectasis",
     "x_min": 100, "y_min": 100, "x_max": 300, "y_max": 300},
    {"case_id": "p2", "image_ref": "p2.png", "image_width_px": 1000,
     "image_height_px": 1000, "label": "pulmonary nodule",
     "x_min": 400, "y_min": 400, "x_max": 600, "y_max": 600},
]

PRIOR_FIXTURE_TEXTS = {
    # case_id -> (findings, survives)
    "r0": ("There is cardiomegaly. Bibasilar opacities present.", True),
    "r1": ("Compared to prior study, the effusion has resolved.", False),
    "r2": ("Lungs are clear. No pneumothorax.", True),
    "r3": ("Stable appearance, unchanged from previous study.", False),
    "r4": ("Right basal consolidation.", True),
    "r5": ("Again seen is a left upper lobe nodule.", False),
    "r6": ("No acute cardiopulmonary process.", True),
    "r7": ("Mild interstitial prominence without effusion.", True),
    "r8": ("Heart size normal. Small right effusion.", True),
    "r9": ("Degenerative changes of the thoracic spine.", True),
}


def test_ingest_fixtures(tmp_path):
    with criterion("Ingest: alias consolidation, box merge, 7-of-10 prior survivors, stratum-exact curation"):
        taxonomy = default_taxonomy()
        src = tmp_path / "loc.jsonl"
        src.write_text("".join(json.dumps(r) + "\n" for r in CONSOLIDATION_FIXTURE))
        cases, report = load_localize_dataset(src, taxonomy, units="pixel")
        by_id = {c.case_id: c for c in cases}
        p1_atl = by_id["p1"].annotation_for("atelectasis_fibrotic_band")
        assert p1_atl is not None and len(p1_atl.boxes) == 2  # merged same-class boxes
        assert by_id["p2"].annotation_for("atelectasis_fibrotic_band") is not None
        assert not report.unmapped_labels

        rep_src = tmp_path / "rep.jsonl"
        rep_src.write_text("".join(
            json.dumps({"case_id": cid, "image_refs": [f"{cid}.png"],
                        "age_years": 50, "indication": "Cough", "findings": text}) + "\n"
            for cid, (text, _) in PRIOR_FIXTURE_TEXTS.items()
        ))
        rep_cases, rep_report = load_report_dataset(rep_src)
        expected_survivors = {c for c, (_, ok) in PRIOR_FIXTURE_TEXTS.items() if ok}
        assert {c.case_id for c in rep_cases} == expected_survivors
        assert len(rep_cases) == 7

        # stratified curation: divisible fixture, exact quotas, seed-stable
        draw_ids = ["nodule_mass", "consolidation", "fracture", "calcification"]
        pool = []
        for i, diff in enumerate([1, 2, 3, 4] * 10):
            anns = tuple(
                FindingAnnotation(draw_ids[j], (BoundingBox(0.1, 0.1, 0.2, 0.2),))
                for j in range(diff)
            )
            pool.append(LocalizeCase(f"c{i:03d}", "i.png", 10, 10, anns))
        sel1 = curate_test_set(pool, 12, seed=4)
        sel2 = curate_test_set(pool, 12, seed=4)
        assert sel1.case_ids == sel2.case_ids
        by_case = {c.case_id: c for c in pool}
        from collections import Counter
        counts = Counter(by_case[cid].difficulty_key for cid in sel1.case_ids)
        assert counts == {1: 3, 2: 3, 3: 3, 4: 3}
