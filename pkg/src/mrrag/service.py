"""HTTP JSON API over the answering engine.

All endpoints live under ``/api/v1``. Sessions are held in memory, expire
after a configurable idle TTL, and process their messages in arrival
order via a per-session lock; corpora are immutable while serving.
Errors are JSON objects ``{"error": ..., "step"?: ...}`` with conventional
status codes: 400 malformed body, 404 unknown session or report, 409 no
corpora to answer from, 500 pipeline step failure.
"""

from __future__ import annotations

import json
import logging
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from mrrag import __version__
from mrrag.engine import Engine
from mrrag.pipeline import ChatSession

logger = logging.getLogger(__name__)

API_PREFIX = "/api/v1"
DEFAULT_SESSION_TTL_HOURS = 24.0


class SessionCreateBody(BaseModel):
    release: str | None = None


class MessageBody(BaseModel):
    query: str
    release: str | None = None


@dataclass
class SessionEntry:
    session: ChatSession
    created_at: float
    last_active: float
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    """In-memory sessions with idle expiry."""

    def __init__(self, ttl_hours: float = DEFAULT_SESSION_TTL_HOURS, now=time.time):
        self.ttl_seconds = ttl_hours * 3600.0
        self.now = now
        self._entries: dict[str, SessionEntry] = {}
        self._lock = threading.Lock()

    def _purge(self) -> None:
        cutoff = self.now() - self.ttl_seconds
        for session_id in [
            sid for sid, e in self._entries.items() if e.last_active < cutoff
        ]:
            del self._entries[session_id]

    def create(self, release: str | None = None) -> str:
        session_id = uuid.uuid4().hex
        now = self.now()
        with self._lock:
            self._purge()
            self._entries[session_id] = SessionEntry(
                session=ChatSession(pinned_release=release),
                created_at=now,
                last_active=now,
            )
        return session_id

    def get(self, session_id: str) -> SessionEntry | None:
        with self._lock:
            self._purge()
            entry = self._entries.get(session_id)
            if entry is not None:
                entry.last_active = self.now()
            return entry

    def delete(self, session_id: str) -> bool:
        with self._lock:
            self._purge()
            return self._entries.pop(session_id, None) is not None

    def __len__(self) -> int:
        with self._lock:
            self._purge()
            return len(self._entries)


def _error(status: int, message: str, step: str | None = None) -> JSONResponse:
    body: dict = {"error": message}
    if step is not None:
        body["step"] = step
    return JSONResponse(status_code=status, content=body)


def create_app(
    engine: Engine,
    *,
    reports_dir: str | Path | None = None,
    session_ttl_hours: float = DEFAULT_SESSION_TTL_HOURS,
    cors_origins: list[str] | None = None,
    request_log: str | Path | None = None,
    now=time.time,
) -> FastAPI:
    app = FastAPI(title="mrrag", version=__version__, openapi_url=f"{API_PREFIX}/openapi.json")
    if cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=cors_origins,
            allow_methods=["*"],
            allow_headers=["*"],
        )
    store = SessionStore(ttl_hours=session_ttl_hours, now=now)
    app.state.sessions = store
    app.state.engine = engine
    reports_path = Path(reports_dir) if reports_dir else None
    log_path = Path(request_log) if request_log else None
    log_lock = threading.Lock()

    def append_log(record: dict) -> None:
        if log_path is None:
            return
        with log_lock:
            log_path.parent.mkdir(parents=True, exist_ok=True)
            with log_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return _error(400, "malformed request body")

    @app.post(f"{API_PREFIX}/sessions")
    def create_session(body: SessionCreateBody | None = None):
        release = body.release if body is not None else None
        session_id = store.create(release)
        return {"session_id": session_id}

    @app.get(f"{API_PREFIX}/sessions/{{session_id}}")
    def get_session(session_id: str):
        entry = store.get(session_id)
        if entry is None:
            return _error(404, "unknown session")
        return {
            "session_id": session_id,
            "history": [
                {"role": role, "text": text} for role, text in entry.session.history.turns
            ],
            "pinned_release": entry.session.pinned_release,
            "created_at": entry.created_at,
            "last_active": entry.last_active,
        }

    @app.delete(f"{API_PREFIX}/sessions/{{session_id}}")
    def delete_session(session_id: str):
        if not store.delete(session_id):
            return _error(404, "unknown session")
        return {"deleted": True}

    @app.post(f"{API_PREFIX}/sessions/{{session_id}}/messages")
    def post_message(session_id: str, body: MessageBody):
        entry = store.get(session_id)
        if entry is None:
            return _error(404, "unknown session")
        if not body.query.strip():
            return _error(400, "query must be non-empty")
        if not engine.has_corpora():
            return _error(409, "no corpora registered")
        with entry.lock:
            answer = engine.answer(entry.session, body.query, release=body.release)
        if answer.error is not None and answer.error_step is not None:
            return _error(500, answer.error, step=answer.error_step)
        response = {
            "answer": answer.text,
            "abstained": answer.abstained,
            "sources": [{"title": title, "page": page} for title, page in answer.sources],
            "standalone_queries": (
                None
                if answer.standalone_queries is None
                else {
                    "base": answer.standalone_queries.base,
                    "filtered": answer.standalone_queries.filtered,
                    "versionless": answer.standalone_queries.versionless,
                }
            ),
            "timings": answer.timings,
            "total_ms": answer.total_ms,
            "release": answer.release,
            "error": answer.error,
        }
        append_log({"session_id": session_id, "query": body.query, "answer": answer.text})
        return response

    @app.get(f"{API_PREFIX}/releases")
    def list_releases():
        releases = engine.releases()
        return {
            "releases": [
                {"canonical": r.canonical, "raw": r.raw, "key": list(r.ordering_key)}
                for r in releases
            ],
            "latest": releases[-1].canonical if releases else None,
        }

    @app.get(f"{API_PREFIX}/health")
    def health():
        releases = engine.releases()
        return {
            "status": "ok",
            "version": __version__,
            "releases": [r.canonical for r in releases],
            "sessions": len(store),
        }

    @app.get(f"{API_PREFIX}/reports")
    def list_reports():
        if reports_path is None or not reports_path.exists():
            return {"reports": []}
        report_ids = sorted(
            p.name for p in reports_path.iterdir() if (p / "report.json").exists()
        )
        return {"reports": report_ids}

    @app.get(f"{API_PREFIX}/reports/{{report_id}}")
    def get_report(report_id: str):
        if reports_path is None:
            return _error(404, "unknown report")
        # refuse path components so report ids cannot escape the directory
        if "/" in report_id or "\\" in report_id or report_id in (".", ".."):
            return _error(404, "unknown report")
        path = reports_path / report_id / "report.json"
        if not path.exists():
            return _error(404, "unknown report")
        return json.loads(path.read_text(encoding="utf-8"))

    return app
