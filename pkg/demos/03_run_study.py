"""Run a miniature crossover study end to end, offline.

Six synthetic participants each complete both modules: pre-test, learning,
post-test. Each participant is in the gamified arm for one module and the
traditional arm for the other. Localize pre-tests are deliberately weak
(only the first finding is reported) and post-tests are perfect, so the
exported outcomes show an improvement; the analytics module then compares
arms with an exact Mann-Whitney U test.
"""

import json
import tempfile
from pathlib import Path

from PIL import Image

from radgame import BoundingBox, LocalizeCase, FindingAnnotation, mann_whitney_u
from radgame.analytics import relative_improvement, time_curve
from radgame.core import ReportCase
from radgame.gateway import LlmGateway
from radgame.ingest import default_taxonomy
from radgame.localize import LocalizeSubmission, SubmissionEntry
from radgame.study import (
    LEARNING,
    MODULE_LOCALIZE,
    MODULE_REPORT,
    POSTTEST,
    PRETEST,
    StudyConfig,
    StudyEngine,
    replay,
)

DRAW_IDS = ["nodule_mass", "consolidation", "fracture"]


def build_cases(images_dir: Path):
    localize = []
    for i in range(40):
        img = images_dir / f"case_{i:02d}.png"
        Image.new("RGB", (64, 64), (15, 15, 15)).save(img)
        anns = tuple(
            FindingAnnotation(cid, (BoundingBox(0.1 * (j + 1), 0.1, 0.1 * (j + 1) + 0.2, 0.4),))
            for j, cid in enumerate(DRAW_IDS[: 1 + i % 3])
        )
        localize.append(LocalizeCase(f"case_{i:02d}", str(img), 64, 64, anns))
    report = [
        ReportCase(f"rep_{i:02d}", (f"rep_{i:02d}.png",), 40 + i, "Dyspnea",
                   "There is cardiomegaly. No effusion.")
        for i in range(20)
    ]
    return localize, report


def judge_fixtures(report_cases):
    fixtures = {}
    for i, case in enumerate(report_cases):
        fixtures[case.case_id] = json.dumps({
            "Explanation": "Canned verdict.",
            "ClinicallySignificantErrors": {
                "a": [], "b": ["missed"] * (i % 2), "c": [], "d": [],
            },
            "MatchedFindings": ["cardiomegaly", "no effusion"],
        })
        fixtures[f"{case.case_id}#style"] = json.dumps({
            "systematic_evaluation_score": 1,
            "organization_language_score": 1,
        })
    return LlmGateway.stubbed(fixtures, fallback="A focal density in the boxed region.")


def main():
    workdir = Path(tempfile.mkdtemp(prefix="radgame-demo-"))
    localize, report = build_cases(workdir)
    engine = StudyEngine(
        StudyConfig(
            localize_phase_sizes=(5, 10, 5),
            report_phase_sizes=(3, 6, 3),
            overlays_dir=str(workdir / "overlays"),
        ),
        default_taxonomy(), localize, report,
        gateway=judge_fixtures(report),
    )

    assignments = engine.init_study([f"p{i}" for i in range(6)], seed=7)
    for a in assignments:
        print(f"{a.participant_id}: Localize={a.localize_group}  Report={a.report_group}")

    cases_by_id = {c.case_id: c for c in localize}

    def localize_submission(case_id, phase):
        case = cases_by_id[case_id]
        keep = 1 if phase == PRETEST else len(case.annotations)
        entries = tuple(
            SubmissionEntry(a.class_id, True, a.boxes)
            for a in case.annotations[:keep]
        )
        return LocalizeSubmission(case_id, entries).to_dict()

    for pid in engine.assignments:
        for module in (MODULE_LOCALIZE, MODULE_REPORT):
            for phase in (PRETEST, LEARNING, POSTTEST):
                engine.start_phase(pid, module, phase)
                while (cid := engine.current_case_id(pid, module)) is not None:
                    sub = (
                        localize_submission(cid, phase)
                        if module == MODULE_LOCALIZE
                        else {"candidate_text": "There is cardiomegaly. No effusion."}
                    )
                    engine.submit(pid, module, cid, sub, elapsed_seconds=30.0)
                engine.advance(pid, module)

    print("\noutcomes:")
    rows = engine.outcomes()
    for r in rows:
        imp = relative_improvement(r.pre_score, r.post_score)
        imp_txt = f"{imp:+.1f}%" if imp is not None else "n/a"
        print(f"  {r.participant_id}/{r.module:8s} {r.group:11s} "
              f"pre={r.pre_score:.3f} post={r.post_score:.3f} improvement={imp_txt}")

    loc = [r for r in rows if r.module == MODULE_LOCALIZE]
    gam = [r.post_score - r.pre_score for r in loc if r.group == "Gamified"]
    trad = [r.post_score - r.pre_score for r in loc if r.group == "Traditional"]
    res = mann_whitney_u(gam, trad, "two")
    print(f"\nMann-Whitney U (Localize deltas, Gamified vs Traditional): "
          f"U={res.statistic} p={res.p_value:.4f} [{res.method}]")

    curve = time_curve(engine.learning_times(MODULE_LOCALIZE), bin_size=5)
    print("time-per-case curve:", [(b['mean_seconds'], b['n']) for b in curve])

    rebuilt = replay(
        engine.config, engine.taxonomy, localize, report, engine.log.events
    )
    print(f"replay reproduces state: {rebuilt.snapshot() == engine.snapshot()}")


if __name__ == "__main__":
    main()
