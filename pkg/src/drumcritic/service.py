"""HTTP session API binding the core modules into a runnable system.

One FastAPI app serves any number of concurrent sessions; each session's
request handling is serialized by a per-session lock. The Phase II queue
is generated on a worker thread while `next` reports 423 generating.
Sessions persist to the data directory after every mutation and are
reloaded on demand after a server restart.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .audio import encode_wav, load_library
from .config import ServiceConfig
from .errors import DrumCriticError, SequencingError, SessionStateError
from .session import (
    PHASE_COMPLETE,
    PHASE_GENERATING,
    PHASE_I,
    Session,
    create_session,
    load_session,
    persist_session,
)


class CreateSessionRequest(BaseModel):
    seed: Optional[int] = None


class CreateSessionResponse(BaseModel):
    session_id: str
    phase: str
    total_phase1: int
    total_phase2: int


class NextLoopResponse(BaseModel):
    loop_id: str
    audio_url: str
    phase: str
    index: int  # 1-based position within the current phase


class RatingRequest(BaseModel):
    loop_id: str
    rating: str = Field(pattern="^(like|dislike)$")


class RatingResponse(BaseModel):
    phase: str
    remaining: int  # ratings left in the phase the session is now in


class ResultsResponse(BaseModel):
    theta_init: float
    theta_final: float
    delta_theta: float


class _Handle:
    def __init__(self, session: Session):
        self.session = session
        self.lock = threading.Lock()
        self.audio_cache: dict[str, bytes] = {}


def _error(status: int, error: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": error, "detail": detail})


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="drumcritic", docs_url=None, redoc_url=None)
    library = load_library(config.library_dir)
    data_dir = Path(config.data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    sessions: dict[str, _Handle] = {}
    registry_lock = threading.Lock()
    seed_counter = {"n": 0}

    def persist(session: Session) -> None:
        persist_session(session, data_dir / session.id)

    def get_handle(session_id: str) -> Optional[_Handle]:
        with registry_lock:
            handle = sessions.get(session_id)
        if handle is not None:
            return handle
        session_dir = data_dir / session_id
        if (session_dir / "session.json").is_file():
            # resume after a restart
            session = load_session(session_dir, library)
            handle = _Handle(session)
            with registry_lock:
                handle = sessions.setdefault(session_id, handle)
            return handle
        return None

    def next_seed(explicit: Optional[int]) -> int:
        if explicit is not None:
            return int(explicit)
        if config.seed_policy == "fixed":
            with registry_lock:
                seed = config.fixed_seed + seed_counter["n"]
                seed_counter["n"] += 1
            return seed
        return int(np.random.SeedSequence().entropy % (2**63))

    def start_phase2_build(handle: _Handle) -> None:
        def work():
            entries = handle.session.generate_phase2_entries()
            with handle.lock:
                handle.session.install_phase2_queue(entries)
                persist(handle.session)

        threading.Thread(target=work, name=f"phase2-{handle.session.id}", daemon=True).start()

    @app.exception_handler(DrumCriticError)
    async def domain_error(_request: Request, exc: DrumCriticError):
        status = 409 if isinstance(exc, (SequencingError, SessionStateError)) else 500
        return _error(status, type(exc).__name__, str(exc))

    @app.exception_handler(RequestValidationError)
    async def validation_error(_request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        field = ".".join(str(p) for p in first.get("loc", []) if p != "body") or "body"
        return _error(400, "validation", f"invalid field {field!r}: {first.get('msg', 'bad value')}")

    @app.post("/api/session", response_model=CreateSessionResponse, status_code=201)
    def create(body: CreateSessionRequest):
        session = create_session(config.session, next_seed(body.seed), library)
        handle = _Handle(session)
        with registry_lock:
            sessions[session.id] = handle
        persist(session)
        return CreateSessionResponse(
            session_id=session.id,
            phase=session.phase,
            total_phase1=config.session.phase1_ratings,
            total_phase2=config.session.phase2_ratings,
        )

    @app.get("/api/session/{session_id}/next")
    def next_loop(session_id: str):
        handle = get_handle(session_id)
        if handle is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        with handle.lock:
            session = handle.session
            if session.phase == PHASE_GENERATING:
                return JSONResponse(status_code=423, content={"status": "generating"})
            if session.phase == PHASE_COMPLETE:
                return _error(409, "complete", "session is complete; fetch results")
            if session.pending is None:
                loop_id, audio = session.next_loop()
                handle.audio_cache = {loop_id: encode_wav(audio)}
                if session.phase == PHASE_I:
                    persist(session)
            loop_id = session.pending.loop_id
            counts = session.counts()
            if session.pending.phase == PHASE_I:
                index = counts["phase1_rated"] + 1
            else:
                index = counts["phase2_rated"] + 1
            return NextLoopResponse(
                loop_id=loop_id,
                audio_url=f"/api/session/{session_id}/audio/{loop_id}",
                phase=session.pending.phase,
                index=index,
            )

    @app.get("/api/session/{session_id}/audio/{loop_id}")
    def audio(session_id: str, loop_id: str):
        handle = get_handle(session_id)
        if handle is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        with handle.lock:
            cached = handle.audio_cache.get(loop_id)
            if cached is None:
                session = handle.session
                if loop_id not in session.loops:
                    return _error(404, "unknown_loop", f"no loop {loop_id!r} in this session")
                cached = encode_wav(session.presentation_audio(loop_id))
        return Response(content=cached, media_type="audio/wav")

    @app.post("/api/session/{session_id}/rating", response_model=RatingResponse)
    def rate(session_id: str, body: RatingRequest):
        handle = get_handle(session_id)
        if handle is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        with handle.lock:
            session = handle.session
            counts = session.submit_rating(body.loop_id, body.rating)
            if session.phase == PHASE_GENERATING:
                start_phase2_build(handle)
            persist(session)
            if counts["phase"] == PHASE_I:
                remaining = counts["phase1_total"] - counts["phase1_rated"]
            else:
                remaining = counts["phase2_total"] - counts["phase2_rated"]
            return RatingResponse(phase=counts["phase"], remaining=remaining)

    @app.get("/api/session/{session_id}/results", response_model=ResultsResponse)
    def results(session_id: str):
        handle = get_handle(session_id)
        if handle is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        with handle.lock:
            result = handle.session.compute_results()
        return ResultsResponse(**result.as_dict())

    client_dir = Path(config.client_dir) if config.client_dir else None
    if client_dir and client_dir.is_dir():
        app.mount("/", StaticFiles(directory=client_dir, html=True), name="client")

    return app
