"""Crossover study engine: assignment, phase sequencing, timing, feedback
gating, score withholding, and event-sourced persistence.

Every state mutation is expressed as an event; applying the event stream in
order reproduces the exact engine state, so the append-only log doubles as
the persistence format and the audit trail. Judge responses are captured in
submit events, which keeps replay fully offline.
"""

from __future__ import annotations

import json
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from .analytics import OutcomeRow
from .core import LocalizeCase, ReportCase
from .feedback import (
    DRAW_MISSED,
    DRAW_WRONG_LOCATION,
    make_draw_feedback,
    make_select_feedback,
)
from .gateway import GatewayError, GatewayRequest, JUDGE, LlmGateway
from .ingest import CuratedSet, TaxonomyConfig, curate_test_set
from .localize import LocalizeSubmission, Outcome, grade_case
from .report import (
    JudgeResponseError,
    build_crimson_prompt,
    build_style_prompt,
    crimson_score,
    parse_crimson_response,
    parse_style_response,
    style_score,
)

MODULE_LOCALIZE = "Localize"
MODULE_REPORT = "Report"
MODULES = (MODULE_LOCALIZE, MODULE_REPORT)

GROUP_GAMIFIED = "Gamified"
GROUP_TRADITIONAL = "Traditional"

PRETEST = "PreTest"
LEARNING = "Learning"
POSTTEST = "PostTest"
DONE = "Done"
PHASE_ORDER = (PRETEST, LEARNING, POSTTEST, DONE)
TEST_PHASES = (PRETEST, POSTTEST)

JSON_REMINDER = "\n\nReturn only the JSON object."


class StudyError(Exception):
    pass


class IllegalTransitionError(StudyError):
    pass


class DeadlineExpiredError(StudyError):
    pass


class WrongCaseError(StudyError):
    pass


@dataclass(frozen=True)
class ParticipantAssignment:
    participant_id: str
    localize_group: str
    report_group: str

    def __post_init__(self):
        if self.localize_group == self.report_group:
            raise ValueError("crossover requires opposite groups per module")

    def group_for(self, module: str) -> str:
        return self.localize_group if module == MODULE_LOCALIZE else self.report_group

    def to_dict(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "localize_group": self.localize_group,
            "report_group": self.report_group,
        }


def assign_groups(participant_ids: Sequence[str], seed: int) -> list[ParticipantAssignment]:
    """Randomly split participants as evenly as parity allows; each
    participant is Gamified in one module and Traditional in the other."""
    if len(set(participant_ids)) != len(participant_ids):
        raise ValueError("duplicate participant ids")
    if not participant_ids:
        raise ValueError("participant id list is empty")
    rng = random.Random(seed)
    shuffled = sorted(participant_ids)
    rng.shuffle(shuffled)
    half = (len(shuffled) + 1) // 2
    assignments = []
    for i, pid in enumerate(shuffled):
        gamified_localize = i < half
        assignments.append(ParticipantAssignment(
            participant_id=pid,
            localize_group=GROUP_GAMIFIED if gamified_localize else GROUP_TRADITIONAL,
            report_group=GROUP_TRADITIONAL if gamified_localize else GROUP_GAMIFIED,
        ))
    return sorted(assignments, key=lambda a: a.participant_id)


@dataclass
class StudyConfig:
    localize_phase_sizes: tuple[int, int, int] = (25, 375, 25)
    report_phase_sizes: tuple[int, int, int] = (10, 150, 10)
    test_minutes: float = 45.0
    iou_threshold: float = 0.25
    overlays_dir: str = "overlays"
    render_feedback: bool = True

    def phase_sizes(self, module: str) -> tuple[int, int, int]:
        return self.localize_phase_sizes if module == MODULE_LOCALIZE else self.report_phase_sizes


@dataclass
class CaseRecord:
    case_id: str
    submission: Optional[dict]
    grade: Optional[dict]
    ts: float
    elapsed_seconds: float
    phase: str
    auto_filled: bool = False
    score_pending: bool = False

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "submission": self.submission,
            "grade": self.grade,
            "ts": self.ts,
            "elapsed_seconds": self.elapsed_seconds,
            "phase": self.phase,
            "auto_filled": self.auto_filled,
            "score_pending": self.score_pending,
        }


@dataclass
class SessionState:
    participant_id: str
    module: str
    group: str
    phase: str = PRETEST
    phase_started: bool = False
    deadline: Optional[float] = None
    cursor: int = 0
    records: list[CaseRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "module": self.module,
            "group": self.group,
            "phase": self.phase,
            "phase_started": self.phase_started,
            "deadline": self.deadline,
            "cursor": self.cursor,
            "records": [r.to_dict() for r in self.records],
        }


class EventLog:
    """Append-only JSON-lines event log, optionally file-backed."""

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path else None
        self.events: list[dict] = []
        if self.path and self.path.exists():
            with open(self.path, encoding="utf-8") as f:
                self.events = [json.loads(line) for line in f if line.strip()]

    def append(self, event: dict) -> None:
        self.events.append(event)
        if self.path:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(event, sort_keys=True) + "\n")


class StudyEngine:
    """Drives all sessions of one study. Mutations to a single session are
    serialized behind one engine-wide lock; grading itself is pure."""

    def __init__(
        self,
        config: StudyConfig,
        taxonomy: TaxonomyConfig,
        localize_cases: Sequence[LocalizeCase],
        report_cases: Sequence[ReportCase],
        gateway: LlmGateway,
        event_log: Optional[EventLog] = None,
        clock=time.time,
    ):
        self.config = config
        self.taxonomy = taxonomy
        self.localize_cases = {c.case_id: c for c in localize_cases}
        self.report_cases = {c.case_id: c for c in report_cases}
        self.gateway = gateway
        self.log = event_log or EventLog()
        self.clock = clock
        self.assignments: dict[str, ParticipantAssignment] = {}
        self.sessions: dict[tuple[str, str], SessionState] = {}
        self.sequences: dict[str, dict[str, list[str]]] = {}  # module -> phase -> case ids
        self.pending_rejudge: list[tuple[str, str]] = []
        self._lock = threading.RLock()

    # -- study setup --------------------------------------------------

    def init_study(self, participant_ids: Sequence[str], seed: int) -> list[ParticipantAssignment]:
        with self._lock:
            if self.assignments:
                raise StudyError("study already initialized")
            assignments = assign_groups(participant_ids, seed)
            sequences = {}
            for module, cases in (
                (MODULE_LOCALIZE, list(self.localize_cases.values())),
                (MODULE_REPORT, list(self.report_cases.values())),
            ):
                n_test, n_learn, _ = self.config.phase_sizes(module)
                test_set = curate_test_set(cases, n_test, seed, "pretest", module)
                remaining = [c for c in cases if c.case_id not in set(test_set.case_ids)]
                learn_set = curate_test_set(remaining, n_learn, seed + 1, "learning", module)
                sequences[module] = {
                    PRETEST: list(test_set.case_ids),
                    LEARNING: list(learn_set.case_ids),
                    # Post-test repeats the pre-test cases in the same order.
                    POSTTEST: list(test_set.case_ids),
                }
            event = {
                "ts": self.clock(),
                "participant_id": None,
                "module": None,
                "event_type": "study_init",
                "payload": {
                    "seed": seed,
                    "assignments": [a.to_dict() for a in assignments],
                    "sequences": sequences,
                },
            }
            self._apply(event)
            self.log.append(event)
            return assignments

    # -- queries -------------------------------------------------------

    def session(self, participant_id: str, module: str) -> SessionState:
        key = (participant_id, module)
        if key not in self.sessions:
            raise StudyError(f"no session for {participant_id}/{module}")
        return self.sessions[key]

    def current_case_id(self, participant_id: str, module: str) -> Optional[str]:
        s = self.session(participant_id, module)
        if s.phase == DONE or not s.phase_started:
            return None
        seq = self.sequences[module][s.phase]
        return seq[s.cursor] if s.cursor < len(seq) else None

    def next_case_payload(self, participant_id: str, module: str) -> dict:
        case_id = self.current_case_id(participant_id, module)
        if case_id is None:
            raise StudyError("no active case (phase not started or exhausted)")
        if module == MODULE_LOCALIZE:
            case = self.localize_cases[case_id]
            return {"case_id": case.case_id, "image_ref": case.image_ref}
        case = self.report_cases[case_id]
        return {
            "case_id": case.case_id,
            "image_refs": list(case.image_refs),
            "age_years": case.age_years,
            "indication": case.indication,
        }

    def snapshot(self) -> str:
        """Canonical JSON of the full engine state, for replay comparison."""
        with self._lock:
            state = {
                "assignments": {p: a.to_dict() for p, a in sorted(self.assignments.items())},
                "sequences": self.sequences,
                "sessions": {
                    f"{p}/{m}": s.to_dict() for (p, m), s in sorted(self.sessions.items())
                },
            }
        return json.dumps(state, sort_keys=True)

    # -- transitions ---------------------------------------------------

    def start_phase(self, participant_id: str, module: str, phase: str) -> SessionState:
        with self._lock:
            s = self.session(participant_id, module)
            if phase != s.phase or s.phase_started or s.phase == DONE:
                raise IllegalTransitionError(
                    f"cannot start {phase}: session is in {s.phase}"
                    f"{' (already started)' if s.phase_started else ''}"
                )
            if module == MODULE_REPORT:
                localize = self.session(participant_id, MODULE_LOCALIZE)
                if localize.phase != DONE:
                    raise IllegalTransitionError(
                        "Report module is locked until Localize is Done"
                    )
            ts = self.clock()
            deadline = ts + self.config.test_minutes * 60 if phase in TEST_PHASES else None
            event = self._event(participant_id, module, "phase_start", {
                "phase": phase, "deadline": deadline,
            }, ts)
            self._apply(event)
            self.log.append(event)
            return s

    def advance(self, participant_id: str, module: str) -> SessionState:
        with self._lock:
            s = self.session(participant_id, module)
            seq = self.sequences[module][s.phase] if s.phase != DONE else []
            if s.phase == DONE:
                raise IllegalTransitionError("session already Done")
            remaining = len(seq) - s.cursor
            if remaining > 0:
                raise StudyError(f"{remaining} cases remaining in {s.phase}")
            event = self._event(participant_id, module, "advance", {})
            self._apply(event)
            self.log.append(event)
            return s

    # -- submission ----------------------------------------------------

    def submit(self, participant_id: str, module: str, case_id: str, submission: dict,
               elapsed_seconds: float = 0.0) -> dict:
        with self._lock:
            s = self.session(participant_id, module)
            if s.phase == DONE or not s.phase_started:
                raise StudyError(f"phase {s.phase} is not accepting submissions")
            now = self.clock()
            if s.deadline is not None and now > s.deadline:
                self._auto_finalize(s, now)
                raise DeadlineExpiredError(
                    f"{s.phase} deadline passed; phase auto-finalized"
                )
            seq = self.sequences[module][s.phase]
            if s.cursor >= len(seq):
                raise StudyError(f"{s.phase} case list exhausted; advance the phase")
            expected = seq[s.cursor]
            if case_id != expected:
                if any(r.case_id == case_id and r.phase == s.phase for r in s.records):
                    raise WrongCaseError(f"duplicate submission for {case_id}")
                raise WrongCaseError(f"expected case {expected}, got {case_id}")

            grade, feedback, score_pending = self._grade(s, case_id, submission)
            response = self._response_payload(s, case_id, grade, feedback, score_pending)
            event = self._event(participant_id, module, "submit", {
                "case_id": case_id,
                "submission": submission,
                "grade": grade,
                "feedback": feedback,
                "elapsed_seconds": elapsed_seconds,
                "score_pending": score_pending,
            }, now)
            self._apply(event)
            self.log.append(event)
            return response

    # -- grading helpers -------------------------------------------------

    def _grade(self, s: SessionState, case_id: str, submission: dict):
        if s.module == MODULE_LOCALIZE:
            sub = LocalizeSubmission.from_dict({**submission, "case_id": case_id})
            case = self.localize_cases[case_id]
            result = grade_case(sub, case, self.taxonomy, self.config.iou_threshold)
            feedback = None
            if s.phase == LEARNING and s.group == GROUP_GAMIFIED and self.config.render_feedback:
                feedback = self._localize_feedback(case, result)
            return result.to_dict(), feedback, False
        case = self.report_cases[case_id]
        candidate = submission.get("candidate_text", "")
        if not candidate.strip():
            return {"crimson_percent": 0.0, "style_percent": 0.0,
                    "assessment": None, "style_assessment": None}, None, False
        try:
            grade = self._judge_report(case, candidate)
            return grade, None, False
        except (GatewayError, JudgeResponseError):
            self.pending_rejudge.append((s.participant_id, case_id))
            return None, None, True

    def _judge_report(self, case: ReportCase, candidate: str) -> dict:
        prompt = build_crimson_prompt(
            case.age_years, case.indication, case.reference_findings, candidate
        )
        resp = self.gateway.complete(
            GatewayRequest(role=JUDGE, prompt=prompt, case_id=case.case_id)
        )
        try:
            assessment = parse_crimson_response(resp.text)
        except JudgeResponseError:
            # One re-ask with a format reminder before surfacing the failure.
            resp = self.gateway.complete(GatewayRequest(
                role=JUDGE, prompt=prompt + JSON_REMINDER, case_id=case.case_id
            ))
            assessment = parse_crimson_response(resp.text)
        style_resp = self.gateway.complete(GatewayRequest(
            role=JUDGE,
            prompt=build_style_prompt(candidate),
            case_id=f"{case.case_id}#style",
        ))
        try:
            style = parse_style_response(style_resp.text)
            style_percent = style_score(style)
            style_dict = style.to_dict()
        except JudgeResponseError:
            style_percent = None
            style_dict = None
        return {
            "crimson_percent": crimson_score(assessment),
            "style_percent": style_percent,
            "assessment": assessment.to_dict(),
            "style_assessment": style_dict,
        }

    def _localize_feedback(self, case: LocalizeCase, result) -> list[dict]:
        items = []
        for class_id, outcome in sorted(result.outcomes.items()):
            if outcome not in (Outcome.MISSED, Outcome.WRONG_LOCATION):
                continue
            cls = self.taxonomy.class_by_id(class_id)
            if cls is None:
                continue
            try:
                if cls.mode.value == "Draw":
                    kind = (
                        DRAW_WRONG_LOCATION
                        if outcome is Outcome.WRONG_LOCATION
                        else DRAW_MISSED
                    )
                    item = make_draw_feedback(
                        case, class_id, self.taxonomy, self.gateway,
                        self.config.overlays_dir, kind=kind,
                    )
                else:
                    item = make_select_feedback(
                        case.case_id, class_id, self.taxonomy, self.gateway
                    )
                items.append(item.to_dict())
            except (OSError, ValueError):
                continue  # missing image: grading is complete regardless
        return items

    def _response_payload(self, s: SessionState, case_id: str, grade, feedback,
                          score_pending: bool) -> dict:
        if s.phase in TEST_PHASES:
            # Test scores are withheld from participants.
            return {"status": "recorded", "case_id": case_id}
        if s.module == MODULE_LOCALIZE:
            case = self.localize_cases[case_id]
            gt = [a.to_dict() for a in case.annotations]
            if s.group == GROUP_GAMIFIED:
                return {
                    "case_id": case_id,
                    "grade": grade,
                    "feedback": feedback or [],
                    "ground_truth": gt,
                }
            return {"case_id": case_id, "ground_truth": gt}
        case = self.report_cases[case_id]
        if s.group == GROUP_GAMIFIED:
            if score_pending:
                return {
                    "case_id": case_id,
                    "status": "score_pending",
                    "reference_findings": case.reference_findings,
                }
            return {
                "case_id": case_id,
                "crimson_percent": grade["crimson_percent"],
                "style_percent": grade["style_percent"],
                "assessment": grade["assessment"],
                "style_assessment": grade["style_assessment"],
                "reference_findings": case.reference_findings,
            }
        return {"case_id": case_id, "reference_findings": case.reference_findings}

    def _auto_finalize(self, s: SessionState, now: float) -> None:
        """Deadline expiry: remaining test cases are graded as empty
        submissions and the phase closes."""
        seq = self.sequences[s.module][s.phase]
        fills = []
        for case_id in seq[s.cursor:]:
            if s.module == MODULE_LOCALIZE:
                case = self.localize_cases[case_id]
                empty = LocalizeSubmission(case_id=case_id, entries=())
                grade = grade_case(empty, case, self.taxonomy, self.config.iou_threshold).to_dict()
            else:
                grade = {"crimson_percent": 0.0, "style_percent": 0.0,
                         "assessment": None, "style_assessment": None}
            fills.append({"case_id": case_id, "grade": grade})
        event = self._event(s.participant_id, s.module, "auto_finalize", {
            "phase": s.phase, "fills": fills,
        }, now)
        self._apply(event)
        self.log.append(event)

    # -- event application (shared by live path and replay) -------------

    def _event(self, participant_id, module, event_type, payload, ts=None) -> dict:
        return {
            "ts": ts if ts is not None else self.clock(),
            "participant_id": participant_id,
            "module": module,
            "event_type": event_type,
            "payload": payload,
        }

    def _apply(self, event: dict) -> None:
        etype = event["event_type"]
        payload = event["payload"]
        if etype == "study_init":
            self.assignments = {
                a["participant_id"]: ParticipantAssignment(**a)
                for a in payload["assignments"]
            }
            self.sequences = payload["sequences"]
            for a in self.assignments.values():
                for module in MODULES:
                    self.sessions[(a.participant_id, module)] = SessionState(
                        participant_id=a.participant_id,
                        module=module,
                        group=a.group_for(module),
                    )
            return
        s = self.sessions[(event["participant_id"], event["module"])]
        if etype == "phase_start":
            s.phase_started = True
            s.deadline = payload["deadline"]
            s.cursor = 0
        elif etype == "submit":
            s.records.append(CaseRecord(
                case_id=payload["case_id"],
                submission=payload["submission"],
                grade=payload["grade"],
                ts=event["ts"],
                elapsed_seconds=payload["elapsed_seconds"],
                phase=s.phase,
                score_pending=payload.get("score_pending", False),
            ))
            s.cursor += 1
        elif etype == "advance":
            s.phase = PHASE_ORDER[PHASE_ORDER.index(s.phase) + 1]
            s.phase_started = False
            s.deadline = None
            s.cursor = 0
        elif etype == "auto_finalize":
            for fill in payload["fills"]:
                s.records.append(CaseRecord(
                    case_id=fill["case_id"],
                    submission=None,
                    grade=fill["grade"],
                    ts=event["ts"],
                    elapsed_seconds=0.0,
                    phase=s.phase,
                    auto_filled=True,
                ))
            s.phase = PHASE_ORDER[PHASE_ORDER.index(s.phase) + 1]
            s.phase_started = False
            s.deadline = None
            s.cursor = 0
        else:
            raise StudyError(f"unknown event type {etype!r}")

    # -- analytics export ------------------------------------------------

    def _phase_scores(self, s: SessionState, phase: str) -> list[float]:
        scores = []
        for r in s.records:
            if r.phase != phase or r.grade is None:
                continue
            if s.module == MODULE_LOCALIZE:
                scores.append(r.grade["case_accuracy"])
            else:
                scores.append(r.grade["crimson_percent"])
        return scores

    def outcomes(self) -> list[OutcomeRow]:
        rows = []
        for (pid, module), s in sorted(self.sessions.items()):
            pre = self._phase_scores(s, PRETEST)
            post = self._phase_scores(s, POSTTEST)
            if not pre or not post:
                continue
            learn_time = sum(
                r.elapsed_seconds for r in s.records if r.phase == LEARNING
            )
            rows.append(OutcomeRow(
                participant_id=pid,
                module=module,
                group=s.group,
                pre_score=sum(pre) / len(pre),
                post_score=sum(post) / len(post),
                total_learning_time_seconds=learn_time,
            ))
        return rows

    def learning_times(self, module: str, group: Optional[str] = None) -> list[list[float]]:
        series = []
        for (pid, m), s in sorted(self.sessions.items()):
            if m != module or (group is not None and s.group != group):
                continue
            times = [r.elapsed_seconds for r in s.records if r.phase == LEARNING]
            if times:
                series.append(times)
        return series


def replay(
    config: StudyConfig,
    taxonomy: TaxonomyConfig,
    localize_cases: Sequence[LocalizeCase],
    report_cases: Sequence[ReportCase],
    events: Sequence[dict],
) -> StudyEngine:
    """Rebuild engine state purely from an event log; no gateway needed."""
    engine = StudyEngine(
        config, taxonomy, localize_cases, report_cases,
        gateway=LlmGateway.stubbed(), event_log=EventLog(),
    )
    for event in events:
        engine._apply(event)
        engine.log.append(event)
    return engine
