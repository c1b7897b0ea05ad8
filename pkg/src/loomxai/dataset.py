"""Text dataset model, ingestion, and the reference filter engine.

The filter engine is the single source of truth for row selection: frontend
controls mirror it for responsiveness, but `apply_filter` here decides what a
selection actually contains.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping, Sequence

from . import wire

CATEGORY_THRESHOLD = 20  # distinct non-number values at or below this infer "category"

_RESERVED = ("id", "text", "label")
_OPS = ("eq", "ne", "le", "ge")


class MissingTextField(Exception):
    pass


class ParseError(Exception):
    def __init__(self, line: int, reason: str) -> None:
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DuplicateId(Exception):
    def __init__(self, record_id: str) -> None:
        super().__init__(f"duplicate id: {record_id!r}")
        self.record_id = record_id


class UnknownColumn(Exception):
    def __init__(self, column: str) -> None:
        super().__init__(f"unknown column: {column!r}")
        self.column = column


class TypeMismatch(Exception):
    pass


class InvalidFilterSpec(Exception):
    pass


@dataclass(frozen=True)
class Record:
    id: str
    text: str
    label: str | None = None
    extras: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class TextDataset:
    """Ordered labeled text records; immutable after construction."""

    records: tuple[Record, ...]
    column_schema: Mapping[str, str]  # column -> "string" | "number" | "category"

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Record]:
        return iter(self.records)

    def ids(self) -> list[str]:
        return [r.id for r in self.records]


@dataclass(frozen=True)
class Predicate:
    column: str
    op: str  # eq | ne | le | ge
    value: Any


@dataclass(frozen=True)
class FilterSpec:
    """Declarative filter shared by the backend oracle and frontend controls.

    `excluded_ids` rides along so one synced attribute covers both faceted
    filtering and manual row deselection.
    """

    substring: str | None = None
    min_len: int | None = None
    max_len: int | None = None
    predicates: tuple[Predicate, ...] = ()
    excluded_ids: frozenset[str] = frozenset()

    def to_value(self) -> dict[str, Any]:
        """Wire form; all keys always present for stable encodings."""
        return {
            "substring": self.substring,
            "min_len": self.min_len,
            "max_len": self.max_len,
            "predicates": [
                {"column": p.column, "op": p.op, "value": p.value} for p in self.predicates
            ],
            "excluded_ids": sorted(self.excluded_ids),
        }

    @classmethod
    def from_value(cls, value: Any) -> FilterSpec:
        if not isinstance(value, Mapping):
            raise InvalidFilterSpec(f"filter spec must be a map, got {type(value).__name__}")
        unknown = set(value) - {"substring", "min_len", "max_len", "predicates", "excluded_ids"}
        if unknown:
            raise InvalidFilterSpec(f"unknown filter fields: {sorted(unknown)}")
        substring = value.get("substring")
        if substring is not None and not isinstance(substring, str):
            raise InvalidFilterSpec("substring must be a string")
        bounds = {}
        for key in ("min_len", "max_len"):
            bound = value.get(key)
            if bound is not None and (not isinstance(bound, int) or isinstance(bound, bool) or bound < 0):
                raise InvalidFilterSpec(f"{key} must be a non-negative integer")
            bounds[key] = bound
        if (
            bounds["min_len"] is not None
            and bounds["max_len"] is not None
            and bounds["min_len"] > bounds["max_len"]
        ):
            raise InvalidFilterSpec("min_len > max_len")
        raw_preds = value.get("predicates", [])
        if not isinstance(raw_preds, Sequence) or isinstance(raw_preds, (str, bytes)):
            raise InvalidFilterSpec("predicates must be a list")
        predicates = []
        for raw in raw_preds:
            if not isinstance(raw, Mapping) or set(raw) - {"column", "op", "value"}:
                raise InvalidFilterSpec(f"bad predicate: {raw!r}")
            column, op = raw.get("column"), raw.get("op")
            if not isinstance(column, str) or op not in _OPS:
                raise InvalidFilterSpec(f"bad predicate: {raw!r}")
            predicates.append(Predicate(column=column, op=op, value=raw.get("value")))
        raw_excluded = value.get("excluded_ids", [])
        if not isinstance(raw_excluded, Sequence) or isinstance(raw_excluded, (str, bytes)):
            raise InvalidFilterSpec("excluded_ids must be a list")
        if any(not isinstance(i, str) for i in raw_excluded):
            raise InvalidFilterSpec("excluded_ids must be strings")
        return cls(
            substring=substring,
            min_len=bounds["min_len"],
            max_len=bounds["max_len"],
            predicates=tuple(predicates),
            excluded_ids=frozenset(raw_excluded),
        )


def _read_source(source: Any) -> str:
    if isinstance(source, os.PathLike):
        with open(source, encoding="utf-8") as fh:
            return fh.read()
    if isinstance(source, str):
        return source
    raise TypeError(f"source must be text or a path, got {type(source).__name__}")


def _parse_jsonl(content: str) -> list[dict[str, Any]]:
    rows = []
    lines = content.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for lineno, line in enumerate(lines, start=1):
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(lineno, exc.msg) from None
        if not isinstance(raw, dict):
            raise ParseError(lineno, "record must be an object")
        rows.append(raw)
    return rows


def _parse_csv(content: str) -> list[dict[str, Any]]:
    reader = csv.reader(io.StringIO(content))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(1, "missing header row") from None
    rows = []
    for lineno, cells in enumerate(reader, start=2):
        if not cells:
            continue
        if len(cells) != len(header):
            raise ParseError(lineno, f"expected {len(header)} fields, got {len(cells)}")
        row: dict[str, Any] = {}
        for key, cell in zip(header, cells):
            if cell != "":
                row[key] = cell
        rows.append(row)
    return rows


def _coerce_id(value: Any, lineno: int) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value)
    raise ParseError(lineno, f"id must be a string or integer, got {type(value).__name__}")


def _scalar_text(value: Any) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _numeric(cell: str) -> int | float | None:
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return None


def ingest(
    source: Any,
    format: str = "records",
    category_threshold: int = CATEGORY_THRESHOLD,
) -> TextDataset:
    """Normalize raw rows into a TextDataset.

    Missing ids are auto-assigned as zero-padded row indices. Column kinds
    are inferred: all-numeric values give "number"; otherwise values are
    stringified, with at most `category_threshold` distinct values giving
    "category" and anything wider "string". The label column, when present,
    joins the schema as a category so selection predicates can target it.
    """
    if format == "records":
        if isinstance(source, (str, bytes)) or not isinstance(source, Iterable):
            raise TypeError("records format expects an iterable of mappings")
        rows = []
        for lineno, raw in enumerate(source, start=1):
            if not isinstance(raw, Mapping):
                raise ParseError(lineno, "record must be a mapping")
            rows.append(dict(raw))
    elif format == "jsonl":
        rows = _parse_jsonl(_read_source(source))
    elif format == "csv":
        rows = _parse_csv(_read_source(source))
    else:
        raise ValueError(f"unknown format: {format!r}")

    pad = max(1, len(str(max(0, len(rows) - 1))))
    seen_ids: set[str] = set()
    texts: list[str] = []
    ids: list[str] = []
    labels: list[str | None] = []
    raw_extras: list[dict[str, Any]] = []
    numeric_from_csv = format == "csv"

    for index, row in enumerate(rows):
        lineno = index + (2 if format == "csv" else 1)
        if "text" not in row or row["text"] is None:
            raise MissingTextField(f"record {index} has no text field")
        text = row["text"]
        if not isinstance(text, str):
            raise ParseError(lineno, "text must be a string")
        record_id = (
            _coerce_id(row["id"], lineno) if row.get("id") is not None else str(index).zfill(pad)
        )
        if record_id in seen_ids:
            raise DuplicateId(record_id)
        seen_ids.add(record_id)
        label = row.get("label")
        if label is not None and not isinstance(label, str):
            label = _scalar_text(label)
        extras = {}
        for key, value in row.items():
            if key in _RESERVED or value is None:
                continue
            if isinstance(value, (list, dict)):
                raise ParseError(lineno, f"column {key!r} must be scalar")
            extras[key] = value
        ids.append(record_id)
        texts.append(text)
        labels.append(label)
        raw_extras.append(extras)

    # Column kind inference over all records, then per-kind normalization.
    columns: dict[str, list[Any]] = {}
    for extras in raw_extras:
        for key, value in extras.items():
            columns.setdefault(key, []).append(value)
    schema: dict[str, str] = {}
    for column, values in columns.items():
        if numeric_from_csv:
            parsed = [_numeric(v) for v in values]
            if all(p is not None for p in parsed):
                schema[column] = "number"
                continue
        elif all(_is_number(v) for v in values):
            schema[column] = "number"
            continue
        distinct = {_scalar_text(v) for v in values}
        schema[column] = "category" if len(distinct) <= category_threshold else "string"
    if any(label is not None for label in labels):
        schema["label"] = "category"

    records = []
    for record_id, text, label, extras in zip(ids, texts, labels, raw_extras):
        normalized = {}
        for key, value in extras.items():
            if schema[key] == "number":
                normalized[key] = _numeric(value) if numeric_from_csv else value
            else:
                normalized[key] = _scalar_text(value)
        records.append(Record(id=record_id, text=text, label=label, extras=normalized))
    return TextDataset(records=tuple(records), column_schema=schema)


def validate_spec(ds: TextDataset, spec: FilterSpec) -> None:
    if spec.min_len is not None and spec.max_len is not None and spec.min_len > spec.max_len:
        raise InvalidFilterSpec("min_len > max_len")
    for pred in spec.predicates:
        kind = ds.column_schema.get(pred.column)
        if kind is None:
            raise UnknownColumn(pred.column)
        if kind == "number":
            if not _is_number(pred.value):
                raise TypeMismatch(f"{pred.op} on number column {pred.column!r} needs a number")
        else:
            if pred.op in ("le", "ge"):
                raise TypeMismatch(f"{pred.op} not defined on {kind} column {pred.column!r}")
            if not isinstance(pred.value, str):
                raise TypeMismatch(f"{pred.op} on {kind} column {pred.column!r} needs a string")


def _column_value(record: Record, column: str) -> Any:
    if column == "label":
        return record.label
    return record.extras.get(column)


def _matches(record: Record, spec: FilterSpec) -> bool:
    if record.id in spec.excluded_ids:
        return False
    if spec.substring is not None and spec.substring.casefold() not in record.text.casefold():
        return False
    n = len(record.text)
    if spec.min_len is not None and n < spec.min_len:
        return False
    if spec.max_len is not None and n > spec.max_len:
        return False
    for pred in spec.predicates:
        value = _column_value(record, pred.column)
        if value is None:
            return False
        if pred.op == "eq" and not value == pred.value:
            return False
        if pred.op == "ne" and not value != pred.value:
            return False
        if pred.op == "le" and not value <= pred.value:
            return False
        if pred.op == "ge" and not value >= pred.value:
            return False
    return True


def apply_filter(ds: TextDataset, spec: FilterSpec) -> TextDataset:
    """Subset of `ds` in original order; an empty spec returns all records.

    A record survives iff it matches the substring (case-insensitive
    containment), the inclusive length bounds, every predicate, and is not
    excluded. Records missing a predicate's column never match it.
    """
    validate_spec(ds, spec)
    kept = tuple(r for r in ds.records if _matches(r, spec))
    return TextDataset(records=kept, column_schema=dict(ds.column_schema))


def column_stats(ds: TextDataset) -> dict[str, Any]:
    """Exact per-column statistics driving frontend filter-control ranges.

    Shape: {"length": {"min", "max"}, "columns": {name: entry}} where a
    number entry carries min/max, a category entry its sorted distinct
    values, and a string entry only its kind.
    """
    lengths = [len(r.text) for r in ds.records]
    stats: dict[str, Any] = {
        "length": {"min": min(lengths) if lengths else 0, "max": max(lengths) if lengths else 0},
        "columns": {},
    }
    for column, kind in sorted(ds.column_schema.items()):
        values = [v for r in ds.records if (v := _column_value(r, column)) is not None]
        if kind == "number":
            entry: dict[str, Any] = {
                "kind": kind,
                "min": min(values) if values else None,
                "max": max(values) if values else None,
            }
        elif kind == "category":
            entry = {"kind": kind, "values": sorted({str(v) for v in values})}
        else:
            entry = {"kind": kind}
        stats["columns"][column] = entry
    return stats


def to_records(ds: TextDataset) -> list[dict[str, Any]]:
    """Serializable row form; label omitted when absent, extras inlined."""
    out = []
    for r in ds.records:
        row: dict[str, Any] = {"id": r.id, "text": r.text}
        if r.label is not None:
            row["label"] = r.label
        row.update(r.extras)
        out.append(row)
    return out


def to_pages(ds: TextDataset, page_size: int, **kwargs: Any) -> list[wire.Message]:
    """Page out the dataset rows; reassembly reproduces `to_records(ds)`."""
    return wire.paginate(to_records(ds), page_size, **kwargs)
