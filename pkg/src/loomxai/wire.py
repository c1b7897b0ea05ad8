"""Wire protocol: message envelope, canonical text codec, pagination.

Every kernel<->view interaction travels as a `Message` encoded in a canonical
text form (JSON with lexicographically sorted keys, no insignificant
whitespace, numbers in shortest round-trip form). The same bytes are used by
the in-process loopback transport, the notebook comm adapter, and the
standalone socket host.

Envelope fields:
  widget_id   opaque string identifying the widget instance
  msg_type    state_update | event | sync_request | sync_reply | page
  attr        attribute name ("" for control messages)
  payload     serializable value (see `check_serializable`)
  seq         non-negative integer, strictly increasing per (widget, attr)
              per origin
  origin      backend | frontend
  page_info   {page_index, page_count, transfer_id}; present iff msg_type
              is page

Schema version "loomxai/1" is carried in sync_request/sync_reply payloads,
not in the envelope itself.
"""

from __future__ import annotations

import json
import math
import secrets
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Iterable, Sequence

WIRE_VERSION = "loomxai/1"

DEFAULT_PAYLOAD_CAP = 10 * 1024 * 1024  # bytes of encoded UTF-8 text
DEFAULT_PAGE_SIZE = 1000  # rows per page message

# Integers beyond 2^53 do not survive the float64 number semantics shared
# with the JavaScript side, so they are rejected rather than silently rounded.
MAX_SAFE_INT = 2**53


class MsgType(str, Enum):
    STATE_UPDATE = "state_update"
    EVENT = "event"
    SYNC_REQUEST = "sync_request"
    SYNC_REPLY = "sync_reply"
    PAGE = "page"


class Origin(str, Enum):
    BACKEND = "backend"
    FRONTEND = "frontend"


class NotSerializable(Exception):
    """Value cannot travel on the wire; `path` locates the offender."""

    def __init__(self, path: str, reason: str) -> None:
        super().__init__(f"not serializable at {path or '$'}: {reason}")
        self.path = path
        self.reason = reason


class Malformed(Exception):
    """Inbound text is not a valid encoded message."""

    def __init__(self, offset: int, reason: str) -> None:
        super().__init__(f"malformed message at offset {offset}: {reason}")
        self.offset = offset
        self.reason = reason


class UnknownMsgType(Exception):
    def __init__(self, msg_type: str) -> None:
        super().__init__(f"unknown msg_type: {msg_type!r}")
        self.msg_type = msg_type


class MissingField(Exception):
    def __init__(self, field: str) -> None:
        super().__init__(f"missing field: {field}")
        self.field = field


class PayloadTooLarge(Exception):
    def __init__(self, size: int, cap: int) -> None:
        super().__init__(f"encoded message is {size} bytes, cap is {cap}")
        self.size = size
        self.cap = cap


class IncompleteTransfer(Exception):
    def __init__(self, missing_pages: Sequence[int]) -> None:
        super().__init__(f"missing pages: {list(missing_pages)}")
        self.missing_pages = tuple(missing_pages)


class MixedTransfer(Exception):
    def __init__(self, detail: str) -> None:
        super().__init__(detail)


@dataclass(frozen=True)
class PageInfo:
    page_index: int
    page_count: int
    transfer_id: str


@dataclass(frozen=True)
class Message:
    widget_id: str
    msg_type: MsgType
    attr: str = ""
    payload: Any = None
    seq: int = 0
    origin: Origin = Origin.BACKEND
    page_info: PageInfo | None = None


def new_transfer_id() -> str:
    """Random 128-bit hex string; collisions surface as MixedTransfer."""
    return secrets.token_hex(16)


def check_serializable(value: Any, _path: str = "", _stack: set[int] | None = None) -> Any:
    """Return a canonical serializable form of `value` or raise NotSerializable.

    Accepted: None, bool, int (|x| <= 2^53), finite float, str, list/tuple,
    string-keyed dict. Tuples canonicalize to lists. Cycles, non-finite
    numbers, oversized integers, and any other host type are rejected with
    the offending path.
    """
    if value is None or isinstance(value, (bool, str)):
        return value
    if isinstance(value, int):
        if abs(value) > MAX_SAFE_INT:
            raise NotSerializable(_path, "integer exceeds 53-bit precision")
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise NotSerializable(_path, "non-finite number")
        return value
    if isinstance(value, (list, tuple)):
        if _stack is None:
            _stack = set()
        if id(value) in _stack:
            raise NotSerializable(_path, "cycle")
        _stack.add(id(value))
        try:
            return [
                check_serializable(item, f"{_path}[{i}]", _stack)
                for i, item in enumerate(value)
            ]
        finally:
            _stack.discard(id(value))
    if isinstance(value, dict):
        if _stack is None:
            _stack = set()
        if id(value) in _stack:
            raise NotSerializable(_path, "cycle")
        _stack.add(id(value))
        try:
            out = {}
            for key, item in value.items():
                if not isinstance(key, str):
                    raise NotSerializable(_path, f"non-string key: {key!r}")
                out[key] = check_serializable(item, f"{_path}.{key}" if _path else key, _stack)
            return out
        finally:
            _stack.discard(id(value))
    raise NotSerializable(_path, f"unsupported type: {type(value).__name__}")


def encode_value(value: Any) -> str:
    """Canonical text form of a bare serializable value (sorted keys, no
    insignificant whitespace, shortest round-trip numbers)."""
    canonical = check_serializable(value)
    canonical = _intify(canonical)
    return json.dumps(
        canonical,
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    )


def _intify(value: Any) -> Any:
    # Integral floats within the 53-bit safe range emit as plain integers so
    # equal numbers share one canonical text; beyond it the float repr stays,
    # since decode would reject the resulting oversized integer literal.
    if isinstance(value, bool):
        return value
    if isinstance(value, float) and value.is_integer() and abs(value) <= MAX_SAFE_INT:
        return int(value)
    if isinstance(value, list):
        return [_intify(v) for v in value]
    if isinstance(value, dict):
        return {k: _intify(v) for k, v in value.items()}
    return value


def encode(msg: Message) -> str:
    """Canonical text form of a message; decode(encode(m)) == m."""
    if not isinstance(msg.msg_type, MsgType):
        raise UnknownMsgType(str(msg.msg_type))
    if not isinstance(msg.origin, Origin):
        raise Malformed(0, f"invalid origin: {msg.origin!r}")
    if not isinstance(msg.seq, int) or isinstance(msg.seq, bool) or msg.seq < 0:
        raise Malformed(0, f"invalid seq: {msg.seq!r}")
    has_page_info = msg.page_info is not None
    if has_page_info != (msg.msg_type is MsgType.PAGE):
        raise Malformed(0, "page_info present iff msg_type is page")
    envelope: dict[str, Any] = {
        "widget_id": msg.widget_id,
        "msg_type": msg.msg_type.value,
        "attr": msg.attr,
        "payload": msg.payload,
        "seq": msg.seq,
        "origin": msg.origin.value,
    }
    if msg.page_info is not None:
        pi = msg.page_info
        if not (0 <= pi.page_index < pi.page_count):
            raise Malformed(0, "page_index out of range")
        envelope["page_info"] = {
            "page_index": pi.page_index,
            "page_count": pi.page_count,
            "transfer_id": pi.transfer_id,
        }
    return encode_value(envelope)


_ENVELOPE_FIELDS = {"widget_id", "msg_type", "attr", "payload", "seq", "origin", "page_info"}
_REQUIRED_FIELDS = ("widget_id", "msg_type", "attr", "payload", "seq", "origin")


def _reject_constant(token: str) -> Any:
    raise Malformed(0, f"non-finite number: {token}")


def _pairs_hook(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, val in pairs:
        if key in out:
            raise Malformed(0, f"duplicate map key: {key!r}")
        out[key] = val
    return out


def decode(text: str) -> Message:
    """Parse and structurally validate an encoded message."""
    try:
        raw = json.loads(text, parse_constant=_reject_constant, object_pairs_hook=_pairs_hook)
    except json.JSONDecodeError as exc:
        raise Malformed(exc.pos, exc.msg) from None
    if not isinstance(raw, dict):
        raise Malformed(0, "envelope must be a map")
    for field in _REQUIRED_FIELDS:
        if field not in raw:
            raise MissingField(field)
    extra = set(raw) - _ENVELOPE_FIELDS
    if extra:
        raise Malformed(0, f"unexpected fields: {sorted(extra)}")
    if not isinstance(raw["widget_id"], str):
        raise Malformed(0, "widget_id must be a string")
    if not isinstance(raw["attr"], str):
        raise Malformed(0, "attr must be a string")
    try:
        msg_type = MsgType(raw["msg_type"])
    except ValueError:
        raise UnknownMsgType(str(raw["msg_type"])) from None
    try:
        origin = Origin(raw["origin"])
    except ValueError:
        raise Malformed(0, f"invalid origin: {raw['origin']!r}") from None
    seq = raw["seq"]
    if not isinstance(seq, int) or isinstance(seq, bool) or seq < 0:
        raise Malformed(0, f"invalid seq: {seq!r}")
    try:
        payload = check_serializable(raw["payload"])
    except NotSerializable as exc:
        raise Malformed(0, f"payload {exc}") from None

    page_info = None
    if "page_info" in raw:
        if msg_type is not MsgType.PAGE:
            raise Malformed(0, "page_info only valid on page messages")
        pi = raw["page_info"]
        if not isinstance(pi, dict):
            raise Malformed(0, "page_info must be a map")
        for field in ("page_index", "page_count", "transfer_id"):
            if field not in pi:
                raise MissingField(f"page_info.{field}")
        idx, count, tid = pi["page_index"], pi["page_count"], pi["transfer_id"]
        if not isinstance(idx, int) or not isinstance(count, int) or isinstance(idx, bool) or isinstance(count, bool):
            raise Malformed(0, "page_index/page_count must be integers")
        if not isinstance(tid, str):
            raise Malformed(0, "transfer_id must be a string")
        if not (0 <= idx < count):
            raise Malformed(0, "page_index out of range")
        page_info = PageInfo(page_index=idx, page_count=count, transfer_id=tid)
    elif msg_type is MsgType.PAGE:
        raise MissingField("page_info")

    return Message(
        widget_id=raw["widget_id"],
        msg_type=msg_type,
        attr=raw["attr"],
        payload=payload,
        seq=seq,
        origin=origin,
        page_info=page_info,
    )


def encoded_size(text: str) -> int:
    return len(text.encode("utf-8"))


def ensure_within_cap(text: str, cap: int = DEFAULT_PAYLOAD_CAP) -> str:
    size = encoded_size(text)
    if size > cap:
        raise PayloadTooLarge(size, cap)
    return text


def chunk_rows(
    rows: Sequence[Any],
    page_size: int,
    oversized: Callable[[list[Any]], bool] | None = None,
) -> list[list[Any]]:
    """Split rows into page chunks of `page_size`, halving any chunk that the
    `oversized` predicate rejects until it is a single row. An empty input
    yields one empty chunk so receivers can tell "empty transfer" from "no
    transfer".
    """
    if page_size < 1:
        raise ValueError("page_size must be >= 1")
    if not rows:
        return [[]]
    pending = [list(rows[i : i + page_size]) for i in range(0, len(rows), page_size)]
    if oversized is None:
        return pending
    chunks: list[list[Any]] = []
    while pending:
        chunk = pending.pop(0)
        if len(chunk) > 1 and oversized(chunk):
            mid = len(chunk) // 2
            pending.insert(0, chunk[mid:])
            pending.insert(0, chunk[:mid])
        else:
            chunks.append(chunk)
    return chunks


def build_pages(
    chunks: Sequence[Sequence[Any]],
    *,
    widget_id: str = "",
    attr: str = "",
    origin: Origin = Origin.BACKEND,
    seq_start: int = 1,
    transfer_id: str | None = None,
) -> list[Message]:
    tid = transfer_id if transfer_id is not None else new_transfer_id()
    count = len(chunks)
    return [
        Message(
            widget_id=widget_id,
            msg_type=MsgType.PAGE,
            attr=attr,
            payload=list(chunk),
            seq=seq_start + index,
            origin=origin,
            page_info=PageInfo(page_index=index, page_count=count, transfer_id=tid),
        )
        for index, chunk in enumerate(chunks)
    ]


def paginate(
    payload: Sequence[Any],
    page_size: int,
    *,
    widget_id: str = "",
    attr: str = "",
    origin: Origin = Origin.BACKEND,
    seq_start: int = 1,
    transfer_id: str | None = None,
) -> list[Message]:
    """Split a list payload into ceil(n/page_size) page messages sharing one
    transfer_id (one empty page for an empty list)."""
    return build_pages(
        chunk_rows(payload, page_size),
        widget_id=widget_id,
        attr=attr,
        origin=origin,
        seq_start=seq_start,
        transfer_id=transfer_id,
    )


def reassemble(pages: Iterable[Message]) -> list[Any]:
    """Restore the original list from a complete page set, in any arrival order."""
    pages = list(pages)
    if not pages:
        raise IncompleteTransfer([0])
    tid = None
    count = None
    seen: dict[int, list[Any]] = {}
    for page in pages:
        if page.msg_type is not MsgType.PAGE or page.page_info is None:
            raise MixedTransfer("non-page message in transfer")
        pi = page.page_info
        if tid is None:
            tid, count = pi.transfer_id, pi.page_count
        elif pi.transfer_id != tid:
            raise MixedTransfer(f"transfer_id {pi.transfer_id!r} != {tid!r}")
        elif pi.page_count != count:
            raise MixedTransfer(f"page_count {pi.page_count} != {count}")
        if pi.page_index in seen:
            raise MixedTransfer(f"duplicate page_index {pi.page_index}")
        if not isinstance(page.payload, list):
            raise MixedTransfer("page payload must be a list")
        seen[pi.page_index] = page.payload
    assert count is not None
    missing = [i for i in range(count) if i not in seen]
    if missing:
        raise IncompleteTransfer(missing)
    out: list[Any] = []
    for i in range(count):
        out.extend(seen[i])
    return out
