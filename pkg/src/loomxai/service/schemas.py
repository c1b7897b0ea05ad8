"""Request/response models for the standalone widget host."""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from .. import wire

WidgetKind = Literal["data_explorer", "data_selector", "inference_explorer"]


class SessionOptions(BaseModel):
    page_size: int = Field(default=wire.DEFAULT_PAGE_SIZE, ge=1)
    payload_cap: int = Field(default=wire.DEFAULT_PAYLOAD_CAP, ge=1)
    k_default: int = Field(default=10, ge=1)
    inferred_cap: int = Field(default=100, ge=1)
    widget_id: Optional[str] = None
    # Counter-based transfer ids make session transcripts reproducible.
    deterministic_ids: bool = False


class RecordIn(BaseModel):
    model_config = ConfigDict(extra="allow")

    text: str
    id: Optional[str] = None
    label: Optional[str] = None


class CreateSessionRequest(BaseModel):
    widget: WidgetKind
    records: Optional[list[RecordIn]] = None
    jsonl_path: Optional[str] = None
    options: SessionOptions = SessionOptions()


class SessionInfo(BaseModel):
    session_id: str
    widget: WidgetKind
    widget_id: str
    attrs: list[str]
    n_records: int
    view_attached: bool


class SessionSnapshot(BaseModel):
    session_id: str
    snapshot: dict[str, Any]
    diagnostics: list[dict[str, str]]


class SelectionResponse(BaseModel):
    session_id: str
    records: list[dict[str, Any]]


class HealthResponse(BaseModel):
    status: str
    schema_version: str
