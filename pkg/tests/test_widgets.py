import random

import pytest

from loomxai.dataset import FilterSpec, apply_filter, ingest, to_records
from loomxai.models import toy_fit
from loomxai.sync import Deadlock, SyncMode
from loomxai.widgets import (
    DataExplorer,
    DataSelector,
    HeadlessClient,
    InferenceExplorer,
    headless_run,
    load_transcript,
    loopback_widget,
    save_transcript,
)
from loomxai.wire import Message, MsgType, Origin, decode


def tiny_dataset():
    return ingest([{"text": "hi"}, {"text": "hello"}, {"text": "worlds"}])


def toy_setup():
    ds = ingest(
        [
            {"text": "good great fine", "label": "pos"},
            {"text": "nice good lovely", "label": "pos"},
            {"text": "bad awful poor", "label": "neg"},
            {"text": "dreadful bad nasty", "label": "neg"},
        ]
    )
    return ds, toy_fit(ds)


class TestDataExplorer:
    def test_mirror_holds_rows_after_drain(self):
        link, widget, client = loopback_widget(DataExplorer, tiny_dataset(), widget_id="w")
        link.drain()
        assert client.state.get_attribute("data") == to_records(widget.dataset)
        assert len(client.state.get_attribute("data")) == 3

    def test_no_two_way_attributes_exist(self):
        _, widget, _ = loopback_widget(DataExplorer, tiny_dataset(), widget_id="w")
        modes = widget.state.attribute_versions()
        assert all(v["mode"] != SyncMode.TWO_WAY.value for v in modes.values())

    def test_filter_event_leaves_backend_unchanged(self):
        link, widget, client = loopback_widget(DataExplorer, tiny_dataset(), widget_id="w")
        link.drain()
        before = (widget.snapshot(), widget.state.attribute_versions())
        client.filter_event({"substring": "h", "min_len": 1})
        link.drain()
        assert (widget.snapshot(), widget.state.attribute_versions()) == before
        assert len(widget.state.events) == 1

    def test_sync_reply_lists_data_and_schema_attrs(self):
        link, widget, client = loopback_widget(DataExplorer, tiny_dataset(), widget_id="w")
        link.drain()
        replies = [decode(t) for t in link.transcript if decode(t).msg_type is MsgType.SYNC_REPLY]
        assert len(replies) == 1
        assert set(replies[0].payload["attrs"]) == {"data", "schema", "stats"}

    def test_raw_state_update_on_one_way_attr_dropped(self):
        link, widget, client = loopback_widget(DataExplorer, tiny_dataset(), widget_id="w")
        link.drain()
        before = widget.snapshot()
        client.send_raw(Message("w", MsgType.STATE_UPDATE, "data", [], 999, Origin.FRONTEND))
        link.drain()
        assert widget.snapshot() == before
        assert any(d["kind"] == "mode_violation" for d in widget.state.diagnostics)


class TestDataSelector:
    def test_client_filter_reaches_selection(self):
        link, widget, client = loopback_widget(DataSelector, tiny_dataset(), widget_id="w")
        link.drain()
        client.apply_filter(FilterSpec(min_len=5).to_value())
        link.drain()
        assert [r.text for r in widget.selection()] == ["hello", "worlds"]

    def test_no_interaction_selection_is_full_dataset(self):
        _, widget, _ = loopback_widget(DataSelector, tiny_dataset(), widget_id="w")
        assert widget.selection().records == widget.dataset.records

    def test_last_applied_spec_wins(self):
        link, widget, client = loopback_widget(DataSelector, tiny_dataset(), widget_id="w")
        link.drain()
        client.apply_filter(FilterSpec(min_len=5).to_value())
        link.drain()
        client.apply_filter(FilterSpec(substring="hi").to_value())
        link.drain()
        assert [r.text for r in widget.selection()] == ["hi"]

    def test_invalid_spec_dropped_previous_retained(self):
        link, widget, client = loopback_widget(DataSelector, tiny_dataset(), widget_id="w")
        link.drain()
        client.apply_filter(FilterSpec(min_len=5).to_value())
        link.drain()
        client.send_raw(
            Message("w", MsgType.STATE_UPDATE, "selection_spec", {"min_len": 9, "max_len": 1}, 50, Origin.FRONTEND)
        )
        link.drain()
        assert [r.text for r in widget.selection()] == ["hello", "worlds"]
        assert any(d["kind"] == "invalid_value" for d in widget.state.diagnostics)

    def test_unknown_column_spec_dropped(self):
        link, widget, client = loopback_widget(DataSelector, tiny_dataset(), widget_id="w")
        link.drain()
        bad = FilterSpec(predicates=(__import__("loomxai.dataset", fromlist=["Predicate"]).Predicate("ghost", "eq", "x"),))
        client.send_raw(
            Message("w", MsgType.STATE_UPDATE, "selection_spec", bad.to_value(), 51, Origin.FRONTEND)
        )
        link.drain()
        assert widget.selection().records == widget.dataset.records

    def test_selection_is_first_class_dataset(self):
        link, widget, client = loopback_widget(DataSelector, tiny_dataset(), widget_id="w")
        link.drain()
        client.apply_filter(FilterSpec(min_len=5).to_value())
        link.drain()
        subset = widget.selection()
        assert apply_filter(subset, FilterSpec(substring="wor")).ids() == subset.ids()[1:]

    def test_excluded_ids_ride_along(self):
        link, widget, client = loopback_widget(DataSelector, tiny_dataset(), widget_id="w")
        link.drain()
        client.apply_filter(FilterSpec(excluded_ids=frozenset({"0"})).to_value())
        link.drain()
        assert widget.selection().ids() == ["1", "2"]


class TestInferenceExplorer:
    def test_submit_text_adds_inferred_point(self):
        ds, clf = toy_setup()
        link, widget, client = loopback_widget(InferenceExplorer, ds, clf, widget_id="w")
        link.drain()
        client.submit_text("good good")
        link.drain()
        inferred = widget.state.get_attribute("inferred_points")
        assert len(inferred) == 1
        entry = inferred[0]
        assert entry["label"] == clf.predict("good good")["label"] == "pos"
        assert isinstance(entry["x"], float) and isinstance(entry["y"], float)
        assert client.state.get_attribute("inferred_points") == inferred

    def test_brush_covering_all_lists_every_record_ascending(self):
        ds, clf = toy_setup()
        link, widget, client = loopback_widget(InferenceExplorer, ds, clf, widget_id="w")
        link.drain()
        client.brush({"x0": -100, "y0": -100, "x1": 100, "y1": 100})
        link.drain()
        rows = widget.state.get_attribute("neighbor_rows")
        assert [r["id"] for r in rows] == sorted(ds.ids())

    def test_empty_submit_publishes_diagnostic(self):
        ds, clf = toy_setup()
        link, widget, client = loopback_widget(InferenceExplorer, ds, clf, widget_id="w")
        link.drain()
        client.submit_text("")
        link.drain()
        assert widget.state.get_attribute("inferred_points") == []
        diags = widget.state.get_attribute("diagnostics")
        assert diags and diags[0]["kind"] == "EmptyInput"
        assert client.state.get_attribute("diagnostics") == diags

    def test_brush_includes_inferred_red_dot(self):
        ds, clf = toy_setup()
        link, widget, client = loopback_widget(InferenceExplorer, ds, clf, widget_id="w")
        link.drain()
        client.submit_text("good")
        link.drain()
        entry = widget.state.get_attribute("inferred_points")[0]
        eps = 1e-6
        client.brush(
            {"x0": entry["x"] - eps, "y0": entry["y"] - eps, "x1": entry["x"] + eps, "y1": entry["y"] + eps}
        )
        link.drain()
        rows = widget.state.get_attribute("neighbor_rows")
        assert any(r["id"] == "new-0" and r["text"] == "good" for r in rows)

    def test_clearing_brush_clears_rows(self):
        ds, clf = toy_setup()
        link, widget, client = loopback_widget(InferenceExplorer, ds, clf, widget_id="w")
        link.drain()
        client.brush({"x0": -1, "y0": -1, "x1": 1, "y1": 1})
        link.drain()
        client.brush(None)
        link.drain()
        assert widget.state.get_attribute("neighbor_rows") == []

    def test_bad_rect_dropped_with_diagnostic(self):
        ds, clf = toy_setup()
        link, widget, client = loopback_widget(InferenceExplorer, ds, clf, widget_id="w")
        link.drain()
        client.send_raw(
            Message("w", MsgType.STATE_UPDATE, "brush_rect", {"x0": 0}, 40, Origin.FRONTEND)
        )
        link.drain()
        assert any(d["kind"] == "invalid_value" for d in widget.state.diagnostics)

    def test_inferred_points_capped_oldest_evicted(self):
        ds, clf = toy_setup()
        link, widget, client = loopback_widget(
            InferenceExplorer, ds, clf, widget_id="w", inferred_cap=3
        )
        link.drain()
        for word in ["good", "bad", "fine", "nice"]:
            client.submit_text(word)
            link.drain()
        inferred = widget.state.get_attribute("inferred_points")
        assert [e["text"] for e in inferred] == ["bad", "fine", "nice"]

    def test_neighbors_of_uses_k_default(self):
        ds, clf = toy_setup()
        _, widget, _ = loopback_widget(InferenceExplorer, ds, clf, widget_id="w", k_default=2)
        rows = widget.neighbors_of((0.0, 0.0))
        assert len(rows) == 2

    def test_model_attr_is_backend_only_and_absent_from_wire(self):
        ds, clf = toy_setup()
        link, widget, client = loopback_widget(InferenceExplorer, ds, clf, widget_id="w")
        link.drain()
        assert "model" not in widget.snapshot()
        assert "model" not in client.snapshot()
        for text in link.transcript:
            assert '"attr":"model"' not in text


class TestHeadlessRun:
    def test_empty_script_transcript_is_initial_publish_plus_handshake(self):
        link, widget, client = loopback_widget(DataExplorer, tiny_dataset(), widget_id="w")
        result = headless_run([], widget, client, link)
        types = [decode(t).msg_type for t in result["messages"]]
        assert types == [
            MsgType.PAGE,  # data (3 rows, one page)
            MsgType.STATE_UPDATE,  # schema
            MsgType.STATE_UPDATE,  # stats
            MsgType.SYNC_REQUEST,
            MsgType.SYNC_REPLY,
        ]

    def test_three_submits_three_handler_firings(self):
        ds, clf = toy_setup()
        link, widget, client = loopback_widget(InferenceExplorer, ds, clf, widget_id="w")
        calls = []
        widget.state.register_handler("pending_input", lambda o, n: calls.append(n))
        script = [("submit_text", "good"), ("submit_text", "bad"), ("submit_text", "good")]
        result = headless_run(script, widget, client, link)
        assert len(calls) == 3
        assert len(result["snapshots"]["backend"]["inferred_points"]) == 3

    def test_resubmitting_identical_text_fires_again(self):
        ds, clf = toy_setup()
        link, widget, client = loopback_widget(InferenceExplorer, ds, clf, widget_id="w")
        script = [("submit_text", "good"), ("submit_text", "good")]
        result = headless_run(script, widget, client, link)
        assert len(result["snapshots"]["backend"]["inferred_points"]) == 2

    def test_two_way_snapshots_converge(self):
        ds, clf = toy_setup()
        link, widget, client = loopback_widget(InferenceExplorer, ds, clf, widget_id="w")
        script = [
            ("submit_text", "good great"),
            ("brush", {"x0": -1, "y0": -1, "x1": 1, "y1": 1}),
            ("submit_text", "awful"),
        ]
        result = headless_run(script, widget, client, link)
        assert result["snapshots"]["backend"] == result["snapshots"]["frontend"]

    def test_random_script_stays_within_budget(self):
        ds, clf = toy_setup()
        link, widget, client = loopback_widget(InferenceExplorer, ds, clf, widget_id="w")
        rng = random.Random(29)
        script = []
        for _ in range(200):
            roll = rng.random()
            if roll < 0.4:
                script.append(("submit_text", " ".join(rng.choices(["good", "bad", "fine", ""], k=2))))
            elif roll < 0.7:
                script.append(
                    ("brush", {"x0": rng.uniform(-1, 1), "y0": rng.uniform(-1, 1), "x1": rng.uniform(-1, 1), "y1": rng.uniform(-1, 1)})
                )
            elif roll < 0.85:
                script.append(("brush", None))
            else:
                script.append(("sync",))
        result = headless_run(script, widget, client, link)  # Deadlock must not fire
        assert result["actions"] == 200
        assert result["snapshots"]["backend"] == result["snapshots"]["frontend"]

    def test_deadlock_surfaces_for_cyclic_handlers(self):
        link, widget, client = loopback_widget(DataSelector, tiny_dataset(), widget_id="w")
        link.drain()  # handshake first so the mirror knows the attribute
        bump = iter(range(1, 10**6))
        widget.state.register_handler(
            "selection_spec",
            lambda o, n: widget.state.set_attribute(
                "selection_spec", FilterSpec(min_len=next(bump)).to_value()
            ),
        )
        client.state.register_handler(
            "selection_spec",
            lambda o, n: client.apply_filter(FilterSpec(max_len=next(bump)).to_value()),
        )
        with pytest.raises(Deadlock):
            headless_run([("apply_filter", FilterSpec(min_len=1).to_value())], widget, client, link)

    def test_transcript_round_trips_through_file(self, tmp_path):
        link, widget, client = loopback_widget(DataExplorer, tiny_dataset(), widget_id="w")
        result = headless_run([("filter_event", {"x": 1})], widget, client, link)
        path = tmp_path / "session.jsonl"
        save_transcript(result["messages"], path)
        loaded = load_transcript(path)
        assert [decode(t) for t in result["messages"]] == loaded

    def test_deterministic_transcripts_with_seeded_ids(self):
        def session():
            counter = iter(range(10**6))
            link, widget, client = loopback_widget(
                DataSelector,
                tiny_dataset(),
                widget_id="w",
                id_factory=lambda: f"{next(counter):032x}",
            )
            return headless_run(
                [("apply_filter", FilterSpec(min_len=3).to_value())], widget, client, link
            )["messages"]

        assert session() == session()
