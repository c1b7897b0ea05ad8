"""Backend halves of the three reference widgets, plus a headless view client.

DataExplorer:      one-way display; view gestures never touch kernel state.
DataSelector:      two-way synced FilterSpec; the kernel-side filter engine is
                   authoritative and `selection()` is usable downstream.
InferenceExplorer: two-way inputs with registered handlers; submitting text
                   runs the model and projects the result back to the view,
                   brushing the scatter publishes the enclosed rows.

`HeadlessClient` scripts the browser view over the public wire format only,
and `headless_run` produces deterministic transcripts for golden tests.
"""

from __future__ import annotations

import math
import secrets
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import wire
from .dataset import FilterSpec, TextDataset, apply_filter, column_stats, to_records, validate_spec
from .models import knn, pca_fit, points_in_rect
from .sync import LoopbackTransport, ObservableState, SyncMode
from .wire import Message, Origin

DEFAULT_INFERRED_CAP = 100


def _auto_id(prefix: str) -> str:
    return f"{prefix}-{secrets.token_hex(4)}"


class _Widget:
    """Shared construction: one ObservableState confined to the kernel side."""

    _prefix = "widget"

    def __init__(
        self,
        dataset: TextDataset,
        widget_id: str | None = None,
        transport: Any = None,
        page_size: int = wire.DEFAULT_PAGE_SIZE,
        payload_cap: int = wire.DEFAULT_PAYLOAD_CAP,
        id_factory: Callable[[], str] = wire.new_transfer_id,
    ) -> None:
        self.dataset = dataset
        self.widget_id = widget_id or _auto_id(self._prefix)
        self.state = ObservableState(
            self.widget_id,
            side=Origin.BACKEND,
            transport=transport,
            payload_cap=payload_cap,
            page_size=page_size,
            id_factory=id_factory,
        )

    def snapshot(self) -> dict[str, Any]:
        return self.state.snapshot()


class DataExplorer(_Widget):
    """Design pattern 1: data flows out, interactions stay in the view."""

    _prefix = "explorer"

    def __init__(self, dataset: TextDataset, **kwargs: Any) -> None:
        super().__init__(dataset, **kwargs)
        self.state.define_attribute(
            "data", to_records(dataset), SyncMode.ONE_WAY_TO_VIEW, paged=True
        )
        self.state.define_attribute(
            "schema", dict(dataset.column_schema), SyncMode.ONE_WAY_TO_VIEW
        )
        self.state.define_attribute("stats", column_stats(dataset), SyncMode.ONE_WAY_TO_VIEW)


class DataSelector(_Widget):
    """Design pattern 2: the view's FilterSpec syncs back; selection() applies
    it through the reference filter engine."""

    _prefix = "selector"

    def __init__(self, dataset: TextDataset, **kwargs: Any) -> None:
        super().__init__(dataset, **kwargs)
        self.state.define_attribute(
            "data", to_records(dataset), SyncMode.ONE_WAY_TO_VIEW, paged=True
        )
        self.state.define_attribute(
            "schema", dict(dataset.column_schema), SyncMode.ONE_WAY_TO_VIEW
        )
        self.state.define_attribute("stats", column_stats(dataset), SyncMode.ONE_WAY_TO_VIEW)
        self.state.define_attribute(
            "selection_spec",
            FilterSpec().to_value(),
            SyncMode.TWO_WAY,
            validator=self._validate_spec,
        )

    def _validate_spec(self, value: Any) -> None:
        validate_spec(self.dataset, FilterSpec.from_value(value))

    def selection(self) -> TextDataset:
        """The currently selected subset, recomputed from the synced spec."""
        spec = FilterSpec.from_value(self.state.get_attribute("selection_spec"))
        return apply_filter(self.dataset, spec)


def _require_rect(value: Any) -> None:
    if value is None:
        return
    if not isinstance(value, Mapping) or set(value) != {"x0", "y0", "x1", "y1"}:
        raise ValueError("brush rect needs exactly x0, y0, x1, y1")
    for key in ("x0", "y0", "x1", "y1"):
        v = value[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ValueError(f"rect corner {key} must be a finite number")


def _require_text(value: Any) -> None:
    if not isinstance(value, str):
        raise ValueError("pending_input must be a string")


class InferenceExplorer(_Widget):
    """Design pattern 3: two-way inputs trigger kernel-side inference whose
    results flow back as display attributes.

    The live adapter and projector ride along as backend-only attributes;
    they never touch the wire.
    """

    _prefix = "inference"

    def __init__(
        self,
        dataset: TextDataset,
        adapter: Any,
        projector_factory: Callable[[np.ndarray], Any] = pca_fit,
        k_default: int = 10,
        inferred_cap: int = DEFAULT_INFERRED_CAP,
        **kwargs: Any,
    ) -> None:
        super().__init__(dataset, **kwargs)
        self.adapter = adapter
        self.k_default = k_default
        self.inferred_cap = inferred_cap
        vectors = np.stack([adapter.embed(r.text) for r in dataset.records])
        self.projector = projector_factory(vectors)
        coords = np.asarray(self.projector.fitted_coords(), dtype=float)
        self._training_coords = coords
        points = [
            {"id": r.id, "x": float(x), "y": float(y), "label": r.label}
            for r, (x, y) in zip(dataset.records, coords)
        ]
        self.state.define_attribute("model", adapter, SyncMode.BACKEND_ONLY)
        self.state.define_attribute("projector", self.projector, SyncMode.BACKEND_ONLY)
        self.state.define_attribute("points", points, SyncMode.ONE_WAY_TO_VIEW)
        self.state.define_attribute(
            "pending_input", "", SyncMode.TWO_WAY, validator=_require_text
        )
        self.state.define_attribute("inferred_points", [], SyncMode.ONE_WAY_TO_VIEW)
        self.state.define_attribute(
            "brush_rect", None, SyncMode.TWO_WAY, validator=_require_rect
        )
        self.state.define_attribute("neighbor_rows", [], SyncMode.ONE_WAY_TO_VIEW)
        self.state.define_attribute("diagnostics", [], SyncMode.ONE_WAY_TO_VIEW)
        self.state.register_handler("pending_input", self._on_pending_input)
        self.state.register_handler("brush_rect", self._on_brush)

    # ---- handlers (fire on applied view-origin changes) -------------------
    def _on_pending_input(self, old: Any, text: str) -> None:
        try:
            result = self.adapter.predict(text)
            coord = self.projector.transform(self.adapter.embed(text))
        except Exception as exc:
            self._publish_diagnostic(type(exc).__name__, "pending_input", str(exc))
            return
        entry = {
            "text": text,
            "label": result["label"],
            "x": float(coord[0]),
            "y": float(coord[1]),
        }
        inferred = list(self.state.get_attribute("inferred_points")) + [entry]
        self.state.set_attribute("inferred_points", inferred[-self.inferred_cap :])

    def _on_brush(self, old: Any, rect: Any) -> None:
        if rect is None:
            self.state.set_attribute("neighbor_rows", [])
            return
        coords, rows = self._combined_points()
        hits = points_in_rect(coords, rect)
        n_train = len(self.dataset.records)
        training = sorted((rows[i] for i in hits if i < n_train), key=lambda r: r["id"])
        inferred = [rows[i] for i in hits if i >= n_train]
        self.state.set_attribute("neighbor_rows", training + inferred)

    def neighbors_of(self, xy: Sequence[float], k: int | None = None) -> list[dict[str, Any]]:
        """Rows for the k nearest points (training and inferred) to a 2-D
        location, nearest first. Kernel-side convenience mirroring the
        brush, for notebook use."""
        coords, rows = self._combined_points()
        indices = knn(coords, xy, self.k_default if k is None else k)
        return [rows[i] for i in indices]

    def _combined_points(self) -> tuple[list[tuple[float, float]], list[dict[str, Any]]]:
        coords = [(float(x), float(y)) for x, y in self._training_coords]
        rows = [
            {"id": r.id, "text": r.text, "label": r.label} for r in self.dataset.records
        ]
        for j, entry in enumerate(self.state.get_attribute("inferred_points")):
            coords.append((entry["x"], entry["y"]))
            rows.append({"id": f"new-{j}", "text": entry["text"], "label": entry["label"]})
        return coords, rows

    def _publish_diagnostic(self, kind: str, attr: str, detail: str) -> None:
        entries = list(self.state.get_attribute("diagnostics"))
        entries.append({"kind": kind, "attr": attr, "detail": detail})
        self.state.set_attribute("diagnostics", entries[-self.inferred_cap :])


class HeadlessClient:
    """Scripted stand-in for the browser view.

    Speaks only the public wire format through its transport endpoint; the
    mirror store is populated exclusively by sync_reply and inbound updates.
    """

    def __init__(
        self,
        endpoint: Any,
        widget_id: str,
        payload_cap: int = wire.DEFAULT_PAYLOAD_CAP,
        page_size: int = wire.DEFAULT_PAGE_SIZE,
    ) -> None:
        self._endpoint = endpoint
        self.state = ObservableState(
            widget_id,
            side=Origin.FRONTEND,
            transport=endpoint,
            payload_cap=payload_cap,
            page_size=page_size,
        )
        self.state.request_sync()

    # ---- scripted actions --------------------------------------------------
    def apply_filter(self, spec_value: Mapping[str, Any]) -> None:
        self.state.set_attribute("selection_spec", dict(spec_value), origin=Origin.FRONTEND)

    def submit_text(self, text: str) -> None:
        self.state.set_attribute("pending_input", text, origin=Origin.FRONTEND)

    def brush(self, rect: Mapping[str, float] | None) -> None:
        self.state.set_attribute(
            "brush_rect", dict(rect) if rect is not None else None, origin=Origin.FRONTEND
        )

    def filter_event(self, payload: Any) -> None:
        """DP1 gesture: an inert event the backend only logs."""
        self.state.emit_event("filter", payload)

    def request_sync(self) -> None:
        self.state.request_sync()

    def send_raw(self, msg: Message) -> None:
        """Push an arbitrary message; used to probe protocol robustness."""
        self._endpoint.send(msg)

    def snapshot(self) -> dict[str, Any]:
        return self.state.snapshot()


_ACTIONS: dict[str, Callable[..., None]] = {
    "apply_filter": HeadlessClient.apply_filter,
    "submit_text": HeadlessClient.submit_text,
    "brush": HeadlessClient.brush,
    "filter_event": HeadlessClient.filter_event,
    "sync": HeadlessClient.request_sync,
}

ACTION_BUDGET = 4  # non-page messages allowed per scripted action


def loopback_widget(
    factory: Callable[..., _Widget], *args: Any, **kwargs: Any
) -> tuple[LoopbackTransport, _Widget, HeadlessClient]:
    """Wire a widget and a headless client over an in-process loopback."""
    link = LoopbackTransport()
    widget = factory(*args, transport=link.backend, **kwargs)
    client = HeadlessClient(
        link.frontend,
        widget_id=widget.widget_id,
        payload_cap=widget.state.payload_cap,
        page_size=widget.state.page_size,
    )
    return link, widget, client


def run_action(client: HeadlessClient, action: Sequence[Any]) -> None:
    name, *args = action
    if name == "raw":
        client.send_raw(args[0])
        return
    fn = _ACTIONS.get(name)
    if fn is None:
        raise ValueError(f"unknown script action: {name!r}")
    fn(client, *args)


def headless_run(
    script: Sequence[Sequence[Any]],
    widget: _Widget,
    client: HeadlessClient,
    link: LoopbackTransport,
    action_budget: int = ACTION_BUDGET,
) -> dict[str, Any]:
    """Execute a client script to quiescence and return the transcript.

    Each action must settle within `action_budget` non-page messages (page
    messages ride free); exceeding the budget raises Deadlock, which signals
    an echo loop and must never fire for well-formed widgets.
    """
    attach_budget = link.pending() + 8
    link.drain(budget=attach_budget, page_exempt=True)
    fired = 0
    for action in script:
        run_action(client, action)
        fired += 1
        link.drain(budget=action_budget, page_exempt=True)
    return {
        "messages": list(link.transcript),
        "actions": fired,
        "snapshots": {
            "backend": widget.state.snapshot(),
            "frontend": client.state.snapshot(),
        },
    }


def save_transcript(messages: Sequence[str], path: Any) -> None:
    """One encoded message per line; the golden-file transcript format."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in messages:
            fh.write(line + "\n")


def load_transcript(path: Any) -> list[Message]:
    with open(path, encoding="utf-8") as fh:
        return [wire.decode(line) for line in fh.read().splitlines() if line]
