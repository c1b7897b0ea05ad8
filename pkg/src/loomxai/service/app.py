"""FastAPI host wrapping the widget package.

Sessions are server-side widgets; one browser view attaches per session over
the WebSocket endpoint, which carries the canonical wire format verbatim
(text frames are encoded messages, nothing else). REST endpoints cover
session management and kernel-side reads like the current selection.
"""

from __future__ import annotations

import itertools
import secrets
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect

from .. import wire
from ..dataset import (
    DuplicateId,
    MissingTextField,
    ParseError,
    TextDataset,
    ingest,
    to_records,
)
from ..models import NoLabels, TooFewPoints, toy_fit
from ..widgets import DataExplorer, DataSelector, InferenceExplorer, _Widget
from .schemas import (
    CreateSessionRequest,
    HealthResponse,
    SelectionResponse,
    SessionInfo,
    SessionOptions,
    SessionSnapshot,
)


class SocketTransport:
    """Buffers backend-origin messages until the attached view drains them."""

    def __init__(self) -> None:
        self._outbound: deque[str] = deque()
        self._sink: Callable[[wire.Message], None] | None = None
        self.sent_log: list[str] = []

    def attach(self, sink: Callable[[wire.Message], None]) -> None:
        self._sink = sink

    def send(self, msg: wire.Message) -> None:
        text = wire.encode(msg)
        self._outbound.append(text)
        self.sent_log.append(text)

    def take_outbound(self) -> list[str]:
        out = list(self._outbound)
        self._outbound.clear()
        return out


@dataclass
class Session:
    session_id: str
    kind: str
    widget: _Widget
    transport: SocketTransport
    lock: threading.Lock = field(default_factory=threading.Lock)
    view_attached: bool = False
    inbound_log: list[str] = field(default_factory=list)
    decode_errors: list[str] = field(default_factory=list)

    def info(self) -> SessionInfo:
        return SessionInfo(
            session_id=self.session_id,
            widget=self.kind,
            widget_id=self.widget.widget_id,
            attrs=sorted(self.widget.state.attribute_versions()),
            n_records=len(self.widget.dataset),
            view_attached=self.view_attached,
        )


def _build_dataset(request: CreateSessionRequest) -> TextDataset:
    if (request.records is None) == (request.jsonl_path is None):
        raise HTTPException(422, "provide exactly one of records or jsonl_path")
    try:
        if request.records is not None:
            return ingest([r.model_dump(exclude_none=True) for r in request.records])
        path = Path(request.jsonl_path)
        if not path.exists():
            raise HTTPException(404, f"no such file: {path}")
        return ingest(path, format="jsonl")
    except (MissingTextField, ParseError, DuplicateId) as exc:
        raise HTTPException(400, str(exc)) from None


def _build_widget(
    kind: str, dataset: TextDataset, options: SessionOptions
) -> tuple[_Widget, SocketTransport]:
    transport = SocketTransport()
    kwargs: dict[str, Any] = {
        "transport": transport,
        "page_size": options.page_size,
        "payload_cap": options.payload_cap,
        "widget_id": options.widget_id,
    }
    if options.deterministic_ids:
        counter = itertools.count()
        kwargs["id_factory"] = lambda: f"{next(counter):032x}"
    try:
        if kind == "data_explorer":
            return DataExplorer(dataset, **kwargs), transport
        if kind == "data_selector":
            return DataSelector(dataset, **kwargs), transport
        adapter = toy_fit(dataset)
        widget = InferenceExplorer(
            dataset,
            adapter,
            k_default=options.k_default,
            inferred_cap=options.inferred_cap,
            **kwargs,
        )
        return widget, transport
    except (NoLabels, TooFewPoints, wire.PayloadTooLarge) as exc:
        raise HTTPException(400, f"{type(exc).__name__}: {exc}") from None


class SessionManager:
    def __init__(self) -> None:
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, request: CreateSessionRequest) -> Session:
        dataset = _build_dataset(request)
        widget, transport = _build_widget(request.widget, dataset, request.options)
        session = Session(
            session_id=f"s-{secrets.token_hex(6)}",
            kind=request.widget,
            widget=widget,
            transport=transport,
        )
        with self._lock:
            self._sessions[session.session_id] = session
        return session

    def find(self, session_id: str) -> Session | None:
        return self._sessions.get(session_id)

    def get(self, session_id: str) -> Session:
        session = self.find(session_id)
        if session is None:
            raise HTTPException(404, f"no such session: {session_id}")
        return session

    def delete(self, session_id: str) -> None:
        with self._lock:
            if session_id not in self._sessions:
                raise HTTPException(404, f"no such session: {session_id}")
            del self._sessions[session_id]

    def list(self) -> list[Session]:
        return list(self._sessions.values())


def create_app(manager: SessionManager | None = None) -> FastAPI:
    manager = manager or SessionManager()
    app = FastAPI(title="loomxai host", version="0.1.0")
    app.state.manager = manager

    @app.get("/healthz", response_model=HealthResponse)
    def healthz() -> HealthResponse:
        return HealthResponse(status="ok", schema_version=wire.WIRE_VERSION)

    @app.post("/sessions", response_model=SessionInfo)
    def create_session(request: CreateSessionRequest) -> SessionInfo:
        return manager.create(request).info()

    @app.get("/sessions", response_model=list[SessionInfo])
    def list_sessions() -> list[SessionInfo]:
        return [s.info() for s in manager.list()]

    @app.get("/sessions/{session_id}", response_model=SessionSnapshot)
    def session_snapshot(session_id: str) -> SessionSnapshot:
        session = manager.get(session_id)
        return SessionSnapshot(
            session_id=session.session_id,
            snapshot=session.widget.snapshot(),
            diagnostics=session.widget.state.diagnostics,
        )

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str) -> dict[str, str]:
        manager.delete(session_id)
        return {"deleted": session_id}

    @app.get("/sessions/{session_id}/selection", response_model=SelectionResponse)
    def session_selection(session_id: str) -> SelectionResponse:
        session = manager.get(session_id)
        if not isinstance(session.widget, DataSelector):
            raise HTTPException(409, f"session {session_id} is a {session.kind}, not a data_selector")
        with session.lock:
            records = to_records(session.widget.selection())
        return SelectionResponse(session_id=session_id, records=records)

    @app.websocket("/sessions/{session_id}/ws")
    async def session_ws(websocket: WebSocket, session_id: str) -> None:
        session = manager.find(session_id)
        await websocket.accept()
        if session is None:
            await websocket.close(code=4404, reason="no such session")
            return
        if session.view_attached:
            await websocket.close(code=1008, reason="view already attached")
            return
        session.view_attached = True
        try:
            for text in session.transport.take_outbound():
                await websocket.send_text(text)
            while True:
                text = await websocket.receive_text()
                session.inbound_log.append(text)
                try:
                    msg = wire.decode(text)
                except Exception as exc:
                    session.decode_errors.append(f"{type(exc).__name__}: {exc}")
                    continue
                with session.lock:
                    session.widget.state.dispatch_incoming(msg)
                for out in session.transport.take_outbound():
                    await websocket.send_text(out)
        except WebSocketDisconnect:
            pass
        finally:
            session.view_attached = False

    return app
