"""Stateful suggestion service: sessions ingest edits and serve the suggest/accept loop.

Each session tracks one file's trajectory. The loop: push edit events, ask
for the next location (the live active delta counts as the most recent
history entry), ask for an edit of the window around a line, then accept:
accepted edits are folded back into history through the same ingest path as
manual edits, so the next round sees them exactly like typing.

A session holds at most one pending suggestion; accepting checks the window
text recorded at issuance and refuses stale suggestions. Suggestion payloads
carry total latency plus the backend share so the local-processing budget is
observable.
"""

from __future__ import annotations

import hashlib
import logging
import threading
import time
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .diff import (
    CodeSnapshot,
    apply_diff,
    compute_diff,
    diff_lines,
    region_split,
    render_numbered_diff,
    shift_delta,
    split_lines,
)
from .metrics import KEEP
from .model_io import (
    BackendError,
    BackendTimeout,
    CompletionBackend,
    ModelIOError,
    PromptConfig,
    Suggestion,
    UnparseableOutput,
    build_edit_prompt,
    build_location_prompt,
    parse_edit_output,
    parse_location_output,
)
from .trajectory import EditEvent, StreamDiscontinuity, TrajectoryState

logger = logging.getLogger(__name__)


class ServiceError(Exception):
    """Base class for service errors; carries the wire error code and HTTP status."""

    code = "SERVICE_ERROR"
    http_status = 400


class UnknownSession(ServiceError):
    code = "UNKNOWN_SESSION"
    http_status = 404


class CapacityExceeded(ServiceError):
    code = "CAPACITY_EXCEEDED"
    http_status = 503


class LineOutOfRange(ServiceError):
    code = "LINE_OUT_OF_RANGE"
    http_status = 400


class StaleSuggestion(ServiceError):
    code = "STALE_SUGGESTION"
    http_status = 409


class NoPending(ServiceError):
    code = "NO_PENDING"
    http_status = 409


@dataclass(frozen=True)
class ServiceConfig:
    """Service-wide defaults; sessions may override history_window and budget."""

    history_window: int = 3
    window_radius: int = 16
    session_ttl_s: float = 1800.0
    max_sessions: int = 256
    latency_budget_ms: float = 450.0
    context_budget_bytes: int = 24 * 1024
    merge_gap: int = 0

    def __post_init__(self) -> None:
        if self.session_ttl_s <= 0 or self.latency_budget_ms <= 0:
            raise ValueError("TTL and budgets must be > 0")


@dataclass
class _Pending:
    suggestion: Suggestion
    window_end: int | None = None
    window_hash: str | None = None
    stale: bool = False  # set when a later event touches the suggestion's region


@dataclass
class Session:
    session_id: str
    state: TrajectoryState
    history_window: int
    latency_budget_ms: float
    created_at: float
    last_seen: float
    pending: _Pending | None = None
    cursor_line: int | None = None
    language_tag: str = ""
    lock: threading.Lock = field(default_factory=threading.Lock)
    rejections: int = 0


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class SuggestionService:
    """Session store plus the loop operations; HTTP layer is a thin shell over this."""

    def __init__(
        self,
        config: ServiceConfig,
        location_backend: CompletionBackend,
        edit_backend: CompletionBackend,
    ):
        self.config = config
        self.location_backend = location_backend
        self.edit_backend = edit_backend
        self._sessions: dict[str, Session] = {}
        self._store_lock = threading.Lock()
        self._prompt_cfg = PromptConfig(max_bytes=config.context_budget_bytes)

    # -- session store ------------------------------------------------------

    def create_session(
        self, history_window: int | None = None, latency_budget_ms: float | None = None
    ) -> Session:
        now = time.monotonic()
        with self._store_lock:
            self._evict_expired(now)
            if len(self._sessions) >= self.config.max_sessions:
                raise CapacityExceeded(f"session limit {self.config.max_sessions} reached")
            session = Session(
                session_id=uuid.uuid4().hex,
                state=TrajectoryState(merge_gap=self.config.merge_gap),
                history_window=history_window or self.config.history_window,
                latency_budget_ms=latency_budget_ms or self.config.latency_budget_ms,
                created_at=now,
                last_seen=now,
            )
            self._sessions[session.session_id] = session
        return session

    def _evict_expired(self, now: float) -> None:
        ttl = self.config.session_ttl_s
        dead = [sid for sid, s in self._sessions.items() if now - s.last_seen > ttl]
        for sid in dead:
            del self._sessions[sid]

    def get_session(self, session_id: str) -> Session:
        with self._store_lock:
            self._evict_expired(time.monotonic())
            session = self._sessions.get(session_id)
            if session is None:
                raise UnknownSession(f"no session {session_id!r}")
            session.last_seen = time.monotonic()
            return session

    def session_count(self) -> int:
        with self._store_lock:
            self._evict_expired(time.monotonic())
            return len(self._sessions)

    # -- loop operations ----------------------------------------------------

    def push_event(self, session_id: str, event: EditEvent) -> dict:
        session = self.get_session(session_id)
        with session.lock:
            delta = compute_diff(event.pre.text, event.post.text)
            session.state.ingest(event)
            if event.post.cursor_line is not None:
                session.cursor_line = event.post.cursor_line
            if event.post.language_tag:
                session.language_tag = event.post.language_tag
            if session.pending is not None and self._touches_pending(session, delta):
                session.pending.stale = True
            return {
                "history_len": len(session.state.history),
                "active_present": session.state.active is not None,
                "current_hash": text_hash(session.state.current_text or ""),
            }

    @staticmethod
    def _touches_pending(session: Session, delta) -> bool:
        if delta.is_empty or session.pending is None:
            return False
        sug = session.pending.suggestion
        if sug.kind == "edit" and sug.window_start is not None and session.pending.window_end is not None:
            lo, hi = sug.window_start, session.pending.window_end
        elif sug.kind == "location" and isinstance(sug.location, int):
            lo = hi = sug.location
        else:
            return False
        pre = delta.pre_range
        return pre is not None and pre.start <= hi and lo <= max(pre.end, pre.start)

    def _history_entries(self, session: Session) -> list[str]:
        entries = session.state.history_with_active()
        return [render_numbered_diff(d) for d in entries[-session.history_window :]]

    def _snapshot(self, session: Session) -> CodeSnapshot:
        return CodeSnapshot(
            session.state.current_text or "",
            cursor_line=session.cursor_line,
            language_tag=session.language_tag,
        )

    def suggest_location(self, session_id: str) -> dict:
        session = self.get_session(session_id)
        with session.lock:
            started = time.perf_counter()
            bundle = build_location_prompt(
                self._snapshot(session), self._history_entries(session), self._prompt_cfg
            )
            result = self.location_backend.complete(bundle)
            try:
                location = parse_location_output(result.text)
            except UnparseableOutput:
                logger.warning("unparseable location output; degrading to keep: %r", result.text[:80])
                location = KEEP
            total_ms = (time.perf_counter() - started) * 1000.0
            suggestion = Suggestion(
                kind="location", raw=result.text, latency_ms=total_ms, location=location
            )
            session.pending = _Pending(suggestion=suggestion)
            return self._suggestion_payload(session, suggestion, backend_ms=result.latency_ms)

    def suggest_edit(self, session_id: str, line: int) -> dict:
        session = self.get_session(session_id)
        with session.lock:
            started = time.perf_counter()
            text = session.state.current_text or ""
            lines = split_lines(text)
            if line < 1 or line > max(1, len(lines)):
                raise LineOutOfRange(f"line {line} outside 1..{max(1, len(lines))}")
            radius = self.config.window_radius
            window_start = max(1, line - radius)
            window_end = min(len(lines), line + radius)
            window_lines = lines[window_start - 1 : window_end]
            window_pre = "\n".join(window_lines)
            bundle = build_edit_prompt(
                self._snapshot(session),
                self._history_entries(session),
                window_start,
                window_pre,
                self._prompt_cfg,
            )
            result = self.edit_backend.complete(bundle)
            edit_window = parse_edit_output(result.text, window_pre)
            diff = render_numbered_diff(
                shift_delta(diff_lines(window_lines, region_split(edit_window)), window_start - 1)
            )
            total_ms = (time.perf_counter() - started) * 1000.0
            suggestion = Suggestion(
                kind="edit",
                raw=result.text,
                latency_ms=total_ms,
                edit_window=edit_window,
                window_start=window_start,
                diff=diff,
            )
            session.pending = _Pending(
                suggestion=suggestion,
                window_end=window_end,
                window_hash=text_hash(window_pre),
            )
            payload = self._suggestion_payload(session, suggestion, backend_ms=result.latency_ms)
            payload["window_end"] = window_end
            payload["window_pre"] = window_pre
            return payload

    def _suggestion_payload(self, session: Session, suggestion: Suggestion, backend_ms: float) -> dict:
        local_ms = max(0.0, suggestion.latency_ms - backend_ms)
        return {
            "suggestion_id": suggestion.suggestion_id,
            "kind": suggestion.kind,
            "location": suggestion.location,
            "edit_window": suggestion.edit_window,
            "window_start": suggestion.window_start,
            "diff": suggestion.diff,
            "raw": suggestion.raw,
            "latency_ms": suggestion.latency_ms,
            "backend_ms": backend_ms,
            "local_ms": local_ms,
            "over_budget": suggestion.latency_ms > session.latency_budget_ms,
        }

    def accept(self, session_id: str, suggestion_id: str) -> dict:
        session = self.get_session(session_id)
        with session.lock:
            pending = session.pending
            if pending is None or pending.suggestion.suggestion_id != suggestion_id:
                raise NoPending(f"no pending suggestion {suggestion_id!r}")
            suggestion = pending.suggestion
            text = session.state.current_text or ""
            if pending.stale:
                session.pending = None
                raise StaleSuggestion("file changed under the suggestion since issuance")
            if suggestion.kind == "location":
                if isinstance(suggestion.location, int) and suggestion.location > max(
                    1, len(split_lines(text))
                ):
                    session.pending = None
                    raise StaleSuggestion("jump target beyond end of file")
                session.pending = None
                if isinstance(suggestion.location, int):
                    session.cursor_line = suggestion.location
                return {
                    "applied": False,
                    "kind": "location",
                    "jump_line": suggestion.location if isinstance(suggestion.location, int) else None,
                    "current_hash": text_hash(text),
                    "history_len": len(session.state.history),
                }
            assert suggestion.window_start is not None and pending.window_end is not None
            lines = split_lines(text)
            window_now_lines = lines[suggestion.window_start - 1 : pending.window_end]
            window_now = "\n".join(window_now_lines)
            if text_hash(window_now) != pending.window_hash:
                session.pending = None
                raise StaleSuggestion("file changed under the suggestion since issuance")
            assert suggestion.edit_window is not None
            delta = shift_delta(
                diff_lines(window_now_lines, region_split(suggestion.edit_window)),
                suggestion.window_start - 1,
            )
            new_text = apply_diff(text, delta)
            event = EditEvent(
                pre=CodeSnapshot(text),
                post=CodeSnapshot(new_text, cursor_line=session.cursor_line),
                timestamp_ms=int(time.monotonic() * 1000),
            )
            session.state.ingest(event)
            session.pending = None
            return {
                "applied": True,
                "kind": "edit",
                "current_hash": text_hash(new_text),
                "current_text": new_text,
                "history_len": len(session.state.history),
                "active_present": session.state.active is not None,
            }

    def reject(self, session_id: str, suggestion_id: str) -> dict:
        session = self.get_session(session_id)
        with session.lock:
            pending = session.pending
            if pending is None or pending.suggestion.suggestion_id != suggestion_id:
                raise NoPending(f"no pending suggestion {suggestion_id!r}")
            session.pending = None
            session.rejections += 1
            logger.info("session %s rejected suggestion %s", session_id, suggestion_id)
            return {"ok": True, "rejections": session.rejections}

    def state_view(self, session_id: str) -> dict:
        session = self.get_session(session_id)
        with session.lock:
            text = session.state.current_text
            return {
                "session_id": session.session_id,
                "current_text": text,
                "current_hash": text_hash(text or ""),
                "history_len": len(session.state.history),
                "active_present": session.state.active is not None,
                "pending_id": session.pending.suggestion.suggestion_id if session.pending else None,
                "pending_stale": session.pending.stale if session.pending else None,
                "cursor_line": session.cursor_line,
                "history_window": session.history_window,
            }


# -- HTTP layer --------------------------------------------------------------


class CreateSessionBody(BaseModel):
    history_window: int | None = None
    latency_budget_ms: float | None = None


class EventBody(BaseModel):
    pre: str
    post: str
    cursor_line: int | None = None
    language: str = ""
    ts: int = 0


class SuggestEditBody(BaseModel):
    line: int


class SuggestionIdBody(BaseModel):
    suggestion_id: str


def create_app(service: SuggestionService) -> FastAPI:
    """Wire the service into the JSON API; errors come back as {code, message}."""
    app = FastAPI(title="nextedit suggestion service")

    @app.exception_handler(ServiceError)
    async def service_error(_req: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.http_status, content=_error_body(exc.code, exc))

    @app.exception_handler(StreamDiscontinuity)
    async def discontinuity(_req: Request, exc: StreamDiscontinuity):
        return JSONResponse(status_code=409, content=_error_body("STREAM_DISCONTINUITY", exc))

    @app.exception_handler(BackendTimeout)
    async def backend_timeout(_req: Request, exc: BackendTimeout):
        return JSONResponse(status_code=504, content=_error_body("BACKEND_TIMEOUT", exc))

    @app.exception_handler(BackendError)
    async def backend_error(_req: Request, exc: BackendError):
        return JSONResponse(status_code=502, content=_error_body("BACKEND_ERROR", exc))

    @app.exception_handler(ModelIOError)
    async def model_io_error(_req: Request, exc: ModelIOError):
        return JSONResponse(status_code=502, content=_error_body("MODEL_OUTPUT_ERROR", exc))

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "sessions": service.session_count()}

    @app.post("/v1/sessions")
    def create_session(body: CreateSessionBody | None = None):
        body = body or CreateSessionBody()
        session = service.create_session(body.history_window, body.latency_budget_ms)
        return {
            "session_id": session.session_id,
            "history_window": session.history_window,
            "latency_budget_ms": session.latency_budget_ms,
        }

    @app.post("/v1/sessions/{session_id}/events")
    def push_event(session_id: str, body: EventBody):
        cursor = body.cursor_line
        if cursor is not None:
            cursor = min(max(1, cursor), max(1, len(split_lines(body.post))))
        event = EditEvent(
            pre=CodeSnapshot(body.pre),
            post=CodeSnapshot(body.post, cursor_line=cursor, language_tag=body.language),
            timestamp_ms=body.ts,
        )
        return service.push_event(session_id, event)

    @app.post("/v1/sessions/{session_id}/suggest/location")
    def suggest_location(session_id: str):
        return service.suggest_location(session_id)

    @app.post("/v1/sessions/{session_id}/suggest/edit")
    def suggest_edit(session_id: str, body: SuggestEditBody):
        return service.suggest_edit(session_id, body.line)

    @app.post("/v1/sessions/{session_id}/accept")
    def accept(session_id: str, body: SuggestionIdBody):
        return service.accept(session_id, body.suggestion_id)

    @app.post("/v1/sessions/{session_id}/reject")
    def reject(session_id: str, body: SuggestionIdBody):
        return service.reject(session_id, body.suggestion_id)

    @app.get("/v1/sessions/{session_id}/state")
    def state(session_id: str):
        return service.state_view(session_id)

    return app


def _error_body(code: str, exc: Exception) -> dict:
    return {"code": code, "message": str(exc)}
