"""Observable attribute store with per-attribute sync modes and transports.

Both ends of a widget hold an `ObservableState`: the kernel side owns the
data, the view side mirrors it. An attribute's sync mode decides what crosses
the wire:

  backend_only     never serialized; how a live model handle is attached
  one_way_to_view  published to the view; view-origin writes are rejected
  two_way          either end may write; last-writer-wins on conflicts

Change handlers fire only for applied updates that originate on the *other*
side, and local sets never fire local handlers, so handler code can write
results back without creating echo loops.
"""

from __future__ import annotations

import copy
import threading
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

from . import wire
from .wire import Message, MsgType, Origin

WIRE_VERSION = wire.WIRE_VERSION


class SyncMode(str, Enum):
    BACKEND_ONLY = "backend_only"
    ONE_WAY_TO_VIEW = "one_way_to_view"
    TWO_WAY = "two_way"


class DuplicateAttribute(Exception):
    pass


class UnknownAttribute(Exception):
    pass


class ModeViolation(Exception):
    pass


class Deadlock(Exception):
    """Drain exceeded its message budget; an echo loop is the usual culprit."""


def resolve_conflict(local: dict[str, Any], incoming: dict[str, Any]) -> dict[str, Any]:
    """Last-writer-wins: higher seq wins; on equal seq the frontend origin
    wins (explicit user intent outranks a programmatic default), and an
    equal-seq same-origin message is a duplicate, which the local copy wins.
    """
    if incoming["seq"] != local["seq"]:
        return incoming if incoming["seq"] > local["seq"] else local
    if incoming["origin"] == local["origin"]:
        return local
    return incoming if incoming["origin"] == Origin.FRONTEND else local


@dataclass
class _Attr:
    value: Any
    mode: SyncMode
    applied_seq: int = 0
    applied_origin: Origin = Origin.BACKEND
    seq_backend: int = 0
    seq_frontend: int = 0
    paged: bool = False
    validator: Callable[[Any], Any] | None = None


@dataclass
class _PageBuffer:
    page_count: int
    origin: Origin
    pages: dict[int, list[Any]] = field(default_factory=dict)
    max_seq: int = 0


class ObservableState:
    """Per-widget attribute store for one end of the wire.

    All mutation entry points (set_attribute, dispatch_incoming) must run on
    one logical dispatch context per widget; snapshot() is safe from any
    context and returns an isolated copy.
    """

    def __init__(
        self,
        widget_id: str,
        side: Origin = Origin.BACKEND,
        transport: Any = None,
        payload_cap: int = wire.DEFAULT_PAYLOAD_CAP,
        page_size: int = wire.DEFAULT_PAGE_SIZE,
        id_factory: Callable[[], str] = wire.new_transfer_id,
    ) -> None:
        self.widget_id = widget_id
        self.side = side
        self.payload_cap = payload_cap
        self.page_size = page_size
        self._id_factory = id_factory
        self._attrs: dict[str, _Attr] = {}
        self._handlers: dict[str, list[tuple[int, Callable[[Any, Any], None]]]] = {}
        self._handler_ids = 0
        self._diagnostics: list[dict[str, str]] = []
        self._events: list[Message] = []
        self._page_buffers: dict[tuple[str, str], _PageBuffer] = {}
        self._control_seq = 0
        self._outbox: deque[Message] = deque()
        self._lock = threading.RLock()
        self._transport = None
        if transport is not None:
            self.connect(transport)

    # ---- wiring ----------------------------------------------------------
    def connect(self, transport: Any) -> None:
        self._transport = transport
        transport.attach(self.dispatch_incoming)
        while self._outbox:
            transport.send(self._outbox.popleft())

    def _send(self, msg: Message) -> None:
        if self._transport is not None:
            self._transport.send(msg)
        else:
            self._outbox.append(msg)

    def _next_control_seq(self) -> int:
        self._control_seq += 1
        return self._control_seq

    # ---- diagnostics -----------------------------------------------------
    def _diag(self, kind: str, attr: str, detail: str) -> None:
        self._diagnostics.append({"kind": kind, "attr": attr, "detail": detail})

    @property
    def diagnostics(self) -> list[dict[str, str]]:
        return list(self._diagnostics)

    @property
    def events(self) -> list[Message]:
        return list(self._events)

    # ---- attribute lifecycle ----------------------------------------------
    def define_attribute(
        self,
        name: str,
        initial_value: Any,
        mode: SyncMode,
        paged: bool = False,
        validator: Callable[[Any], Any] | None = None,
    ) -> None:
        """Register an attribute. Synced modes queue an initial publish
        (seq 1); backend_only accepts any host value and never touches the
        wire, which is how model handles ride along."""
        with self._lock:
            if name in self._attrs:
                raise DuplicateAttribute(name)
            if mode is SyncMode.BACKEND_ONLY:
                self._attrs[name] = _Attr(value=initial_value, mode=mode, validator=validator)
                self._handlers[name] = []
                return
            canonical = wire.check_serializable(initial_value)
            attr = _Attr(value=canonical, mode=mode, paged=paged, validator=validator)
            messages = self._prepare_messages(name, attr, canonical, self.side)
            self._attrs[name] = attr
            self._handlers[name] = []
            self._commit(attr, canonical, messages, self.side)

    def set_attribute(self, name: str, value: Any, origin: Origin | None = None) -> None:
        """Replace an attribute's value as `origin` (defaults to this side).

        Local sets never fire local handlers; synced modes emit one
        state_update (or page set) to the other end.
        """
        origin = self.side if origin is None else origin
        with self._lock:
            attr = self._attrs.get(name)
            if attr is None:
                raise UnknownAttribute(name)
            if origin is Origin.FRONTEND and attr.mode is not SyncMode.TWO_WAY:
                raise ModeViolation(f"{name} is {attr.mode.value}; frontend writes not allowed")
            if attr.mode is SyncMode.BACKEND_ONLY:
                attr.value = value
                attr.applied_seq = max(attr.seq_backend, attr.seq_frontend) + 1
                attr.seq_backend = attr.applied_seq
                return
            canonical = wire.check_serializable(value)
            messages = self._prepare_messages(name, attr, canonical, origin)
            self._commit(attr, canonical, messages, origin)

    def get_attribute(self, name: str) -> Any:
        attr = self._attrs.get(name)
        if attr is None:
            raise UnknownAttribute(name)
        return attr.value

    def has_attribute(self, name: str) -> bool:
        return name in self._attrs

    def mode_of(self, name: str) -> SyncMode:
        attr = self._attrs.get(name)
        if attr is None:
            raise UnknownAttribute(name)
        return attr.mode

    def _prepare_messages(
        self, name: str, attr: _Attr, value: Any, origin: Origin
    ) -> list[Message]:
        """Build the outbound message(s) for a new value, cap-checked, with
        no store mutation, so an oversized write rejects atomically."""
        base = max(attr.seq_backend, attr.seq_frontend)
        if attr.paged:
            if not isinstance(value, list):
                raise wire.NotSerializable(name, "paged attribute must hold a list")
            return self._build_pages(name, value, origin=origin, seq_start=base + 1)
        msg = Message(
            widget_id=self.widget_id,
            msg_type=MsgType.STATE_UPDATE,
            attr=name,
            payload=value,
            seq=base + 1,
            origin=origin,
        )
        wire.ensure_within_cap(wire.encode(msg), self.payload_cap)
        return [msg]

    def _commit(self, attr: _Attr, value: Any, messages: list[Message], origin: Origin) -> None:
        last_seq = messages[-1].seq
        attr.value = value
        if origin is Origin.BACKEND:
            attr.seq_backend = last_seq
        else:
            attr.seq_frontend = last_seq
        attr.applied_seq = last_seq
        attr.applied_origin = origin
        for msg in messages:
            self._send(msg)

    def _build_pages(
        self, name: str, rows: list[Any], origin: Origin, seq_start: int
    ) -> list[Message]:
        # Splits oversized chunks before committing any seq numbers, so a
        # too-large single record aborts the whole transfer atomically.
        def oversized(chunk: list[Any]) -> bool:
            probe = Message(
                widget_id=self.widget_id,
                msg_type=MsgType.PAGE,
                attr=name,
                payload=chunk,
                seq=seq_start,
                origin=origin,
                page_info=wire.PageInfo(0, 1, "0" * 32),
            )
            return wire.encoded_size(wire.encode(probe)) > self.payload_cap

        chunks = wire.chunk_rows(rows, self.page_size, oversized=oversized)
        pages = wire.build_pages(
            chunks,
            widget_id=self.widget_id,
            attr=name,
            origin=origin,
            seq_start=seq_start,
            transfer_id=self._id_factory(),
        )
        for page in pages:
            wire.ensure_within_cap(wire.encode(page), self.payload_cap)
        return pages

    # ---- handlers ----------------------------------------------------------
    def register_handler(self, name: str, callback: Callable[[Any, Any], None]) -> int:
        """Run `callback(old, new)` on every applied change arriving from the
        other side, synchronously, in registration order, exactly once per
        change."""
        with self._lock:
            if name not in self._attrs:
                raise UnknownAttribute(name)
            self._handler_ids += 1
            self._handlers[name].append((self._handler_ids, callback))
            return self._handler_ids

    def unregister_handler(self, handler_id: int) -> None:
        with self._lock:
            for name, entries in self._handlers.items():
                self._handlers[name] = [e for e in entries if e[0] != handler_id]

    def _fire_handlers(self, name: str, old: Any, new: Any) -> None:
        for _, callback in list(self._handlers.get(name, ())):
            try:
                callback(old, new)
            except Exception as exc:  # a crashing handler must not kill dispatch
                self._diag("handler_error", name, f"{type(exc).__name__}: {exc}")

    # ---- inbound ----------------------------------------------------------
    def dispatch_incoming(self, msg: Message) -> None:
        """Apply one decoded inbound message; never raises on bad input,
        recording a diagnostic and dropping instead (version-skew tolerance)."""
        with self._lock:
            if msg.widget_id != self.widget_id:
                self._diag("misaddressed", msg.attr, f"widget_id {msg.widget_id!r}")
                return
            if msg.origin is self.side:
                self._diag("echo", msg.attr, "message from own side dropped")
                return
            if msg.msg_type is MsgType.EVENT:
                self._events.append(msg)
                return
            if msg.msg_type is MsgType.SYNC_REQUEST:
                self._handle_sync_request(msg)
                return
            if msg.msg_type is MsgType.SYNC_REPLY:
                self._handle_sync_reply(msg)
                return
            if msg.msg_type is MsgType.PAGE:
                self._handle_page(msg)
                return
            self._apply_remote(msg.attr, msg.payload, msg.seq, msg.origin)

    def _handle_sync_request(self, msg: Message) -> None:
        if self.side is not Origin.BACKEND:
            self._diag("protocol", "", "sync_request received by a mirror")
            return
        version = msg.payload.get("version") if isinstance(msg.payload, dict) else None
        if version != WIRE_VERSION:
            self._diag("version_mismatch", "", f"peer version {version!r}")
        attrs = {}
        for name, attr in self._attrs.items():
            if attr.mode is SyncMode.BACKEND_ONLY:
                continue
            attrs[name] = {
                "value": attr.value,
                "seq": attr.applied_seq,
                "origin": attr.applied_origin.value,
                "mode": attr.mode.value,
                "paged": attr.paged,
            }
        reply = Message(
            widget_id=self.widget_id,
            msg_type=MsgType.SYNC_REPLY,
            attr="",
            payload={"version": WIRE_VERSION, "attrs": attrs},
            seq=self._next_control_seq(),
            origin=self.side,
        )
        self._send(reply)

    def _handle_sync_reply(self, msg: Message) -> None:
        if self.side is not Origin.FRONTEND:
            self._diag("protocol", "", "sync_reply received by the owner")
            return
        payload = msg.payload if isinstance(msg.payload, dict) else {}
        version = payload.get("version")
        if version != WIRE_VERSION:
            self._diag("version_mismatch", "", f"peer version {version!r}")
        attrs = payload.get("attrs")
        if not isinstance(attrs, dict):
            self._diag("protocol", "", "sync_reply without attrs map")
            return
        for name, entry in attrs.items():
            if not isinstance(entry, dict) or "value" not in entry:
                self._diag("protocol", name, "bad sync_reply entry")
                continue
            try:
                mode = SyncMode(entry.get("mode", SyncMode.TWO_WAY.value))
                origin = Origin(entry.get("origin", Origin.BACKEND.value))
            except ValueError:
                self._diag("protocol", name, "bad mode/origin in sync_reply")
                continue
            seq = entry.get("seq", 0)
            if not isinstance(seq, int) or isinstance(seq, bool) or seq < 0:
                self._diag("protocol", name, "bad seq in sync_reply")
                continue
            if name not in self._attrs:
                attr = _Attr(
                    value=entry["value"],
                    mode=mode,
                    applied_seq=seq,
                    applied_origin=origin,
                    paged=bool(entry.get("paged", False)),
                )
                if origin is Origin.BACKEND:
                    attr.seq_backend = seq
                else:
                    attr.seq_frontend = seq
                self._attrs[name] = attr
                self._handlers.setdefault(name, [])
            else:
                self._apply_remote(name, entry["value"], seq, origin)

    def _handle_page(self, msg: Message) -> None:
        name, pi = msg.attr, msg.page_info
        attr = self._attrs.get(name)
        if attr is None:
            self._diag("unknown_attribute", name, "page for undefined attribute")
            return
        if msg.origin is Origin.FRONTEND and attr.mode is not SyncMode.TWO_WAY:
            self._diag("mode_violation", name, f"{attr.mode.value} rejects frontend pages")
            return
        key = (name, pi.transfer_id)
        buf = self._page_buffers.get(key)
        if buf is None:
            buf = _PageBuffer(page_count=pi.page_count, origin=msg.origin)
            self._page_buffers[key] = buf
        if pi.page_count != buf.page_count or msg.origin is not buf.origin:
            self._diag("mixed_transfer", name, f"transfer {pi.transfer_id} inconsistent")
            del self._page_buffers[key]
            return
        if pi.page_index in buf.pages:
            self._diag("mixed_transfer", name, f"duplicate page {pi.page_index}")
            del self._page_buffers[key]
            return
        if not isinstance(msg.payload, list):
            self._diag("mixed_transfer", name, "page payload must be a list")
            del self._page_buffers[key]
            return
        buf.pages[pi.page_index] = msg.payload
        buf.max_seq = max(buf.max_seq, msg.seq)
        if len(buf.pages) == buf.page_count:
            rows: list[Any] = []
            for i in range(buf.page_count):
                rows.extend(buf.pages[i])
            del self._page_buffers[key]
            self._apply_remote(name, rows, buf.max_seq, buf.origin)

    def _apply_remote(self, name: str, value: Any, seq: int, origin: Origin) -> None:
        attr = self._attrs.get(name)
        if attr is None:
            self._diag("unknown_attribute", name, "update for undefined attribute")
            return
        if origin is Origin.FRONTEND and attr.mode is not SyncMode.TWO_WAY:
            self._diag("mode_violation", name, f"{attr.mode.value} rejects frontend writes")
            return
        local = {"value": attr.value, "seq": attr.applied_seq, "origin": attr.applied_origin}
        incoming = {"value": value, "seq": seq, "origin": origin}
        if resolve_conflict(local, incoming) is local:
            return  # stale or losing write; normal LWW, no diagnostic
        if attr.validator is not None:
            try:
                attr.validator(value)
            except Exception as exc:
                self._diag("invalid_value", name, f"{type(exc).__name__}: {exc}")
                return
        try:
            canonical = wire.check_serializable(value)
        except wire.NotSerializable as exc:
            self._diag("invalid_value", name, str(exc))
            return
        old = attr.value
        attr.value = canonical
        attr.applied_seq = seq
        attr.applied_origin = origin
        if origin is Origin.BACKEND:
            attr.seq_backend = max(attr.seq_backend, seq)
        else:
            attr.seq_frontend = max(attr.seq_frontend, seq)
        self._fire_handlers(name, old, canonical)

    # ---- control ----------------------------------------------------------
    def request_sync(self) -> None:
        """Ask the other end for a full snapshot (frontend attach handshake)."""
        self._send(
            Message(
                widget_id=self.widget_id,
                msg_type=MsgType.SYNC_REQUEST,
                attr="",
                payload={"version": WIRE_VERSION},
                seq=self._next_control_seq(),
                origin=self.side,
            )
        )

    def emit_event(self, attr: str, payload: Any) -> None:
        """Send an inert event message; the receiving store only logs it."""
        self._send(
            Message(
                widget_id=self.widget_id,
                msg_type=MsgType.EVENT,
                attr=attr,
                payload=wire.check_serializable(payload),
                seq=self._next_control_seq(),
                origin=self.side,
            )
        )

    # ---- inspection --------------------------------------------------------
    def snapshot(self) -> dict[str, Any]:
        """Deep copy of all synced attribute values; backend_only excluded."""
        with self._lock:
            return {
                name: copy.deepcopy(attr.value)
                for name, attr in self._attrs.items()
                if attr.mode is not SyncMode.BACKEND_ONLY
            }

    def attribute_versions(self) -> dict[str, dict[str, Any]]:
        """Seq/origin/mode per attribute; used to assert isolation exactly."""
        with self._lock:
            return {
                name: {
                    "seq": attr.applied_seq,
                    "origin": attr.applied_origin.value,
                    "mode": attr.mode.value,
                }
                for name, attr in self._attrs.items()
            }


class LoopbackEndpoint:
    """One side of an in-process transport pair."""

    def __init__(self, link: LoopbackTransport, label: Origin) -> None:
        self._link = link
        self.label = label
        self.sink: Callable[[Message], None] | None = None

    def attach(self, sink: Callable[[Message], None]) -> None:
        self.sink = sink

    def send(self, msg: Message) -> None:
        self._link._transmit(self, msg)


class LoopbackTransport:
    """In-process message pair with a global FIFO queue and a transcript.

    Messages cross as encoded text and are decoded on delivery, so both ends
    exercise the real wire format. `drain` delivers queued messages until
    quiescence, raising Deadlock past the budget.
    """

    def __init__(self) -> None:
        self.backend = LoopbackEndpoint(self, Origin.BACKEND)
        self.frontend = LoopbackEndpoint(self, Origin.FRONTEND)
        self._queue: deque[tuple[LoopbackEndpoint, str]] = deque()
        self.transcript: list[str] = []

    def _transmit(self, sender: LoopbackEndpoint, msg: Message) -> None:
        text = wire.encode(msg)
        self.transcript.append(text)
        dest = self.frontend if sender is self.backend else self.backend
        self._queue.append((dest, text))

    def pending(self) -> int:
        return len(self._queue)

    def drain(self, budget: int | None = None, page_exempt: bool = False) -> int:
        """Deliver queued messages until quiescence. With `page_exempt`, page
        messages do not count against the budget (the per-action bound is
        "4 + pages")."""
        delivered = 0
        while self._queue:
            dest, text = self._queue.popleft()
            msg = wire.decode(text)
            if not (page_exempt and msg.msg_type is MsgType.PAGE):
                delivered += 1
                if budget is not None and delivered > budget:
                    raise Deadlock(f"drain exceeded budget of {budget} messages")
            if dest.sink is not None:
                dest.sink(msg)
        return delivered


class CommTransport:
    """Adapter for a notebook comm channel carrying wire-format text frames.

    `comm` needs two methods: send(text) to push a frame to the peer, and
    on_msg(callback) to register the inbound-frame callback. This matches
    the shape of Jupyter comm objects without importing any notebook stack.
    """

    def __init__(self, comm: Any) -> None:
        self._comm = comm
        self._sink: Callable[[Message], None] | None = None
        self.decode_errors: list[str] = []
        comm.on_msg(self._handle_frame)

    def attach(self, sink: Callable[[Message], None]) -> None:
        self._sink = sink

    def send(self, msg: Message) -> None:
        self._comm.send(wire.encode(msg))

    def _handle_frame(self, text: str) -> None:
        try:
            msg = wire.decode(text)
        except Exception as exc:
            self.decode_errors.append(f"{type(exc).__name__}: {exc}")
            return
        if self._sink is not None:
            self._sink(msg)
