"""REST API and file-backed session store for the evaluation harness.

The API never exposes model identities while a session is open: blinded
payloads carry labels only, and the unblind/report endpoints refuse to serve
until the session is completed. All judgment payloads are validated
server-side regardless of any client checks.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from importlib import resources
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .errors import JudgmentError, LitpipeError, SessionError
from .eval_harness import (
    STATUS_COMPLETE,
    STATUS_OPEN,
    BlindedCase,
    EvaluationSession,
    Judgment,
    PromptCase,
    aggregate_report,
    complete_session,
    create_session,
    record_judgment,
    unblind,
)
from .inference import InferenceConfig, ModelResponse, ResponseMatrix

logger = logging.getLogger(__name__)


def default_rubric() -> str:
    return resources.files("litpipe.data").joinpath("judge_rubric.txt").read_text("utf-8")


# --- persistence -------------------------------------------------------------


def session_to_dict(session: EvaluationSession) -> dict:
    return {
        "session_id": session.session_id,
        "case_ids": session.case_ids,
        "model_ids": session.model_ids,
        "blind_seed": session.blind_seed,
        "reference_model": session.reference_model,
        "status": session.status,
        "cases": {
            cid: {"instruction": c.instruction, "input": c.input}
            for cid, c in session.cases.items()
        },
        "blinded": {
            cid: {"labeled_responses": list(map(list, bc.labeled_responses))}
            for cid, bc in session.blinded.items()
        },
        "label_to_model": session.label_to_model,
        "judgments": [
            {
                "evaluator_id": j.evaluator_id,
                "evaluator_kind": j.evaluator_kind,
                "case_id": j.case_id,
                "ranks": j.ranks,
                "grades": j.grades,
            }
            for j in session.judgments.values()
        ],
    }


def session_from_dict(data: dict) -> EvaluationSession:
    cases = {
        cid: PromptCase(case_id=cid, instruction=c["instruction"], input=c.get("input", ""))
        for cid, c in data["cases"].items()
    }
    blinded = {
        cid: BlindedCase(
            case_id=cid,
            instruction=cases[cid].instruction,
            input=cases[cid].input,
            labeled_responses=tuple((label, text) for label, text in bc["labeled_responses"]),
        )
        for cid, bc in data["blinded"].items()
    }
    session = EvaluationSession(
        session_id=data["session_id"],
        case_ids=list(data["case_ids"]),
        model_ids=list(data["model_ids"]),
        blind_seed=int(data["blind_seed"]),
        cases=cases,
        blinded=blinded,
        label_to_model={cid: dict(m) for cid, m in data["label_to_model"].items()},
        reference_model=data.get("reference_model"),
        status=data.get("status", STATUS_OPEN),
    )
    for j in data.get("judgments", []):
        judgment = Judgment(
            evaluator_id=j["evaluator_id"],
            evaluator_kind=j.get("evaluator_kind", "human"),
            case_id=j["case_id"],
            ranks={k: int(v) for k, v in j["ranks"].items()},
            grades=dict(j["grades"]),
        )
        session.judgments[(judgment.evaluator_id, judgment.case_id)] = judgment
    return session


class SessionStore:
    """Threadsafe in-memory session registry with optional directory persistence."""

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory else None
        self._sessions: dict[str, EvaluationSession] = {}
        self._lock = threading.Lock()
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            for path in sorted(self.directory.glob("*.session.json")):
                data = json.loads(path.read_text(encoding="utf-8"))
                session = session_from_dict(data)
                self._sessions[session.session_id] = session

    def _path(self, session_id: str) -> Path:
        return self.directory / f"{session_id}.session.json"

    def save(self, session: EvaluationSession) -> None:
        with self._lock:
            self._sessions[session.session_id] = session
            if self.directory is not None:
                tmp = self._path(session.session_id).with_suffix(".tmp")
                tmp.write_text(
                    json.dumps(session_to_dict(session), ensure_ascii=False, indent=2) + "\n",
                    encoding="utf-8",
                )
                os.replace(tmp, self._path(session.session_id))

    def get(self, session_id: str) -> EvaluationSession:
        session = self._sessions.get(session_id)
        if session is None:
            raise SessionError(f"unknown session: {session_id}")
        return session

    def list_ids(self) -> list[str]:
        return sorted(self._sessions)

    @property
    def lock(self) -> threading.Lock:
        return self._lock


# --- API ----------------------------------------------------------------------


class CaseBody(BaseModel):
    case_id: str
    instruction: str
    input: str = ""


class ResponseBody(BaseModel):
    case_id: str
    model_id: str
    text: str


class CreateSessionBody(BaseModel):
    blind_seed: int
    model_ids: list[str]
    cases: list[CaseBody]
    responses: list[ResponseBody]
    session_id: str | None = None
    reference_model: str | None = None


class JudgmentBody(BaseModel):
    evaluator: str
    case_id: str
    ranks: dict[str, int]
    grades: dict[str, str]
    evaluator_kind: str = Field(default="human")


def _error(status_code: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status_code, content={"error": message})


def _progress(session: EvaluationSession, evaluator: str) -> dict:
    return {"judged": len(session.judged_cases(evaluator)), "total": len(session.case_ids)}


def create_app(store: SessionStore, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="litpipe evaluation harness")
    judgment_lock = threading.Lock()
    rubric = default_rubric()

    @app.exception_handler(LitpipeError)
    async def litpipe_error_handler(_request, exc: LitpipeError):
        status = 400 if isinstance(exc, JudgmentError) else 409
        if isinstance(exc, SessionError) and str(exc).startswith("unknown session"):
            status = 404
        return _error(status, str(exc))

    @app.post("/sessions")
    def post_session(body: CreateSessionBody):
        cases = [
            PromptCase(case_id=c.case_id, instruction=c.instruction, input=c.input)
            for c in body.cases
        ]
        matrix = ResponseMatrix([c.case_id for c in cases], body.model_ids)
        config = InferenceConfig()
        for r in body.responses:
            matrix.put(
                ModelResponse(
                    case_id=r.case_id,
                    model_id=r.model_id,
                    text=r.text,
                    latency=0.0,
                    config_used=config,
                )
            )
        session = create_session(
            cases,
            matrix,
            body.model_ids,
            body.blind_seed,
            session_id=body.session_id,
            reference_model=body.reference_model,
        )
        store.save(session)
        return {
            "session_id": session.session_id,
            "status": session.status,
            "cases": len(session.case_ids),
            "labels": session.labels,
        }

    @app.get("/sessions/{session_id}/cases/next")
    def next_case(session_id: str, evaluator: str):
        session = store.get(session_id)
        if not evaluator:
            return _error(400, "evaluator query parameter must be non-empty")
        if session.status == STATUS_COMPLETE:
            return {"done": True, "reason": "session complete", "progress": _progress(session, evaluator)}
        blinded = session.next_unjudged(evaluator)
        if blinded is None:
            return {"done": True, "reason": "all cases judged", "progress": _progress(session, evaluator)}
        return {
            "done": False,
            "case_id": blinded.case_id,
            "instruction": blinded.instruction,
            "input": blinded.input,
            "responses": [{"label": label, "text": text} for label, text in blinded.labeled_responses],
            "labels": session.labels,
            "rubric": rubric,
            "progress": _progress(session, evaluator),
        }

    @app.post("/sessions/{session_id}/judgments")
    def post_judgment(session_id: str, body: JudgmentBody):
        session = store.get(session_id)
        with judgment_lock:
            record_judgment(
                session,
                evaluator_id=body.evaluator,
                case_id=body.case_id,
                ranks=body.ranks,
                grades=body.grades,
                evaluator_kind=body.evaluator_kind,
            )
            store.save(session)
        return {"ok": True, "progress": _progress(session, body.evaluator)}

    @app.post("/sessions/{session_id}/complete")
    def post_complete(session_id: str):
        session = store.get(session_id)
        with judgment_lock:
            complete_session(session)
            store.save(session)
        return {"session_id": session.session_id, "status": session.status}

    @app.get("/sessions/{session_id}/report")
    def get_report(session_id: str, reference: str | None = None):
        session = store.get(session_id)
        if session.status != STATUS_COMPLETE:
            return _error(409, f"session {session_id} is not complete; report is unavailable")
        report = aggregate_report(session, reference_model=reference)
        return report.to_dict()

    @app.get("/sessions/{session_id}/unblind")
    def get_unblind(session_id: str):
        session = store.get(session_id)
        return {"session_id": session_id, "assignments": unblind(session)}

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(
    store: SessionStore,
    host: str = "127.0.0.1",
    port: int = 8799,
    ui_dir: str | Path | None = None,
) -> None:
    import uvicorn

    uvicorn.run(create_app(store, ui_dir=ui_dir), host=host, port=port, log_level="warning")
