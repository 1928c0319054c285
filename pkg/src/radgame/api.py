"""HTTP facade over the study engine, versioned under /api/v1.

Participants authenticate with a bearer token minted at creation. State
changes accept a client idempotency key; duplicate submits return the
original response. Test-phase submission responses structurally lack score
and feedback fields.
"""

from __future__ import annotations

import secrets
from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, Header, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field, model_validator

from . import __version__
from .study import (
    DeadlineExpiredError,
    IllegalTransitionError,
    MODULE_LOCALIZE,
    MODULE_REPORT,
    MODULES,
    StudyEngine,
    StudyError,
    WrongCaseError,
)


class ParticipantCreate(BaseModel):
    participant_id: str


class AssignRequest(BaseModel):
    participant_ids: list[str]
    seed: int


class PhaseStartRequest(BaseModel):
    phase: str


class BoxModel(BaseModel):
    x_min: float = Field(ge=0, le=1)
    y_min: float = Field(ge=0, le=1)
    x_max: float = Field(ge=0, le=1)
    y_max: float = Field(ge=0, le=1)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be < x_max")
        if not self.y_min < self.y_max:
            raise ValueError("y_min must be < y_max")
        return self


class EntryModel(BaseModel):
    class_id: str
    asserted: bool = True
    boxes: list[BoxModel] = Field(default_factory=list)


class LocalizeSubmitRequest(BaseModel):
    case_id: str
    entries: list[EntryModel] = Field(default_factory=list)
    elapsed_seconds: float = 0.0
    idempotency_key: Optional[str] = None


class ReportSubmitRequest(BaseModel):
    case_id: str
    candidate_text: str
    elapsed_seconds: float = 0.0
    idempotency_key: Optional[str] = None


def _parse_session_id(sid: str) -> tuple[str, str]:
    participant_id, sep, module = sid.rpartition(".")
    if not sep or module not in MODULES:
        raise HTTPException(
            status_code=404,
            detail={"code": "bad_session_id",
                    "message": "session id must be '<participant>.<Localize|Report>'"},
        )
    return participant_id, module


def _error(status: int, code: str, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail={"code": code, "message": message})


def create_app(engine: StudyEngine, images_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="radgame", version=__version__)
    tokens: dict[str, str] = {}  # token -> participant_id
    idempotent: dict[tuple[str, str, str], dict] = {}

    def auth_participant(
        sid: str, authorization: Optional[str] = Header(default=None)
    ) -> tuple[str, str]:
        participant_id, module = _parse_session_id(sid)
        if tokens:
            if not authorization or not authorization.startswith("Bearer "):
                raise _error(401, "auth_required", "missing bearer token")
            token = authorization.removeprefix("Bearer ")
            if tokens.get(token) != participant_id:
                raise _error(403, "forbidden", "token does not match session participant")
        return participant_id, module

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": __version__}

    @app.post("/api/v1/participants")
    def create_participant(req: ParticipantCreate):
        token = secrets.token_urlsafe(16)
        tokens[token] = req.participant_id
        return {"participant_id": req.participant_id, "token": token}

    @app.post("/api/v1/study/assign")
    def study_assign(req: AssignRequest):
        try:
            assignments = engine.init_study(req.participant_ids, req.seed)
        except (StudyError, ValueError) as e:
            raise _error(409, "assign_failed", str(e))
        return {"assignments": [a.to_dict() for a in assignments]}

    @app.get("/api/v1/session/{sid}")
    def get_session(ids: tuple = Depends(auth_participant)):
        participant_id, module = ids
        try:
            s = engine.session(participant_id, module)
        except StudyError as e:
            raise _error(404, "no_session", str(e))
        return {
            "participant_id": s.participant_id,
            "module": s.module,
            "group": s.group,
            "phase": s.phase,
            "phase_started": s.phase_started,
            "deadline": s.deadline,
            "cursor": s.cursor,
            "cases_completed": len(s.records),
        }

    @app.post("/api/v1/session/{sid}/phase/start")
    def phase_start(req: PhaseStartRequest, ids: tuple = Depends(auth_participant)):
        participant_id, module = ids
        try:
            s = engine.start_phase(participant_id, module, req.phase)
        except IllegalTransitionError as e:
            raise _error(409, "illegal_transition", str(e))
        except StudyError as e:
            raise _error(404, "no_session", str(e))
        return {"phase": s.phase, "deadline": s.deadline}

    @app.get("/api/v1/session/{sid}/case/next")
    def case_next(ids: tuple = Depends(auth_participant)):
        participant_id, module = ids
        try:
            return engine.next_case_payload(participant_id, module)
        except StudyError as e:
            raise _error(409, "no_active_case", str(e))

    def _submit(participant_id, module, case_id, submission, elapsed, key):
        if key is not None:
            cached = idempotent.get((participant_id, module, key))
            if cached is not None:
                return cached
        try:
            response = engine.submit(participant_id, module, case_id, submission, elapsed)
        except DeadlineExpiredError as e:
            raise _error(409, "deadline_expired", str(e))
        except WrongCaseError as e:
            raise _error(409, "wrong_case", str(e))
        except StudyError as e:
            raise _error(409, "submit_rejected", str(e))
        if key is not None:
            idempotent[(participant_id, module, key)] = response
        return response

    @app.post("/api/v1/session/{sid}/submit/localize")
    def submit_localize(req: LocalizeSubmitRequest, ids: tuple = Depends(auth_participant)):
        participant_id, module = ids
        if module != MODULE_LOCALIZE:
            raise _error(409, "wrong_module", "session is not a Localize session")
        submission = {
            "entries": [e.model_dump() for e in req.entries],
            "elapsed_seconds": req.elapsed_seconds,
        }
        return _submit(participant_id, module, req.case_id, submission,
                       req.elapsed_seconds, req.idempotency_key)

    @app.post("/api/v1/session/{sid}/submit/report")
    def submit_report(req: ReportSubmitRequest, ids: tuple = Depends(auth_participant)):
        participant_id, module = ids
        if module != MODULE_REPORT:
            raise _error(409, "wrong_module", "session is not a Report session")
        submission = {
            "candidate_text": req.candidate_text,
            "elapsed_seconds": req.elapsed_seconds,
        }
        return _submit(participant_id, module, req.case_id, submission,
                       req.elapsed_seconds, req.idempotency_key)

    @app.post("/api/v1/session/{sid}/advance")
    def advance(ids: tuple = Depends(auth_participant)):
        participant_id, module = ids
        try:
            s = engine.advance(participant_id, module)
        except (IllegalTransitionError, StudyError) as e:
            raise _error(409, "advance_rejected", str(e))
        return {"phase": s.phase}

    @app.get("/api/v1/session/{sid}/feedback/{case_id}")
    def get_feedback(case_id: str, ids: tuple = Depends(auth_participant)):
        participant_id, module = ids
        s = engine.session(participant_id, module)
        if s.group != "Gamified":
            raise _error(403, "no_feedback", "feedback is only available to the Gamified group")
        for event in engine.log.events:
            if (
                event["event_type"] == "submit"
                and event["participant_id"] == participant_id
                and event["module"] == module
                and event["payload"]["case_id"] == case_id
            ):
                return {"case_id": case_id, "feedback": event["payload"].get("feedback") or []}
        raise _error(404, "not_found", f"no submission for case {case_id}")

    @app.get("/api/v1/analytics/summary")
    def analytics_summary():
        rows = engine.outcomes()
        return {"outcomes": [r.to_dict() for r in rows]}

    if images_dir and Path(images_dir).is_dir():
        app.mount("/images", StaticFiles(directory=images_dir), name="images")

    return app
