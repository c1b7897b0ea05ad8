"""Headless acceptance checks for the widget framework.

Each criterion is a self-contained randomized (but seeded) check returning a
CriterionResult; the CLI `accept` subcommand and the pytest acceptance module
both run these. Checks compare implementation behavior against independent
oracles: brute-force geometry scans, the reference filter engine, fresh
adapter predictions, and canonical byte comparisons.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from random import Random
from typing import Any, Callable

import numpy as np

from . import wire
from .dataset import FilterSpec, Predicate, apply_filter, ingest, to_records
from .demo import DemoConfig, class_pools, demo_data
from .models import knn, pca_fit, points_in_rect, toy_fit
from .sync import Deadlock, SyncMode
from .widgets import DataExplorer, DataSelector, InferenceExplorer, headless_run, loopback_widget
from .wire import Message, MsgType, Origin


class UnknownSuite(Exception):
    def __init__(self, name: str) -> None:
        super().__init__(f"unknown suite: {name!r} (known: {', '.join(sorted(SUITES))})")


@dataclass(frozen=True)
class CriterionResult:
    criterion: str
    passed: bool
    measured: dict[str, Any]

    def to_line(self) -> str:
        return wire.encode_value(
            {"criterion": self.criterion, "passed": self.passed, "measured": self.measured}
        )


def _words(rng: Random, vocab: list[str], lo: int = 1, hi: int = 8) -> str:
    return " ".join(rng.choices(vocab, k=rng.randint(lo, hi)))


_VOCAB = [
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "river", "stone",
    "cloud", "ember", "quiet", "rapid", "Good", "BAD", "museum", "atlas",
]


def _random_dataset(rng: Random, max_rows: int = 500, min_rows: int = 1):
    rows = []
    for i in range(rng.randint(min_rows, max_rows)):
        row: dict[str, Any] = {"text": _words(rng, _VOCAB, 0 if rng.random() < 0.05 else 1, 8)}
        if rng.random() < 0.8:
            row["label"] = rng.choice(["pos", "neg"])
        if rng.random() < 0.9:
            row["score"] = rng.randint(0, 20)
        if rng.random() < 0.9:
            row["src"] = rng.choice(["web", "book", "chat"])
        rows.append(row)
    return ingest(rows)


def _random_spec(rng: Random, ds) -> FilterSpec:
    kwargs: dict[str, Any] = {}
    if rng.random() < 0.5:
        kwargs["substring"] = rng.choice(_VOCAB)[: rng.randint(1, 5)]
    if rng.random() < 0.5:
        lo, hi = sorted((rng.randint(0, 30), rng.randint(0, 60)))
        kwargs["min_len"], kwargs["max_len"] = lo, hi
    predicates = []
    if "score" in ds.column_schema and rng.random() < 0.5:
        predicates.append(Predicate("score", rng.choice(["le", "ge", "eq", "ne"]), rng.randint(0, 20)))
    if "src" in ds.column_schema and rng.random() < 0.4:
        predicates.append(Predicate("src", rng.choice(["eq", "ne"]), rng.choice(["web", "book", "chat"])))
    if "label" in ds.column_schema and rng.random() < 0.3:
        predicates.append(Predicate("label", "eq", rng.choice(["pos", "neg"])))
    kwargs["predicates"] = tuple(predicates)
    ids = ds.ids()
    if ids and rng.random() < 0.4:
        kwargs["excluded_ids"] = frozenset(rng.sample(ids, k=rng.randint(0, min(5, len(ids)))))
    return FilterSpec(**kwargs)


# ---- criterion 1 -----------------------------------------------------------

def dp1_isolation() -> CriterionResult:
    started = time.perf_counter()
    rng = Random(101)
    ds = _random_dataset(rng, max_rows=60)
    link, widget, client = loopback_widget(DataExplorer, ds, widget_id="dp1")
    link.drain()
    before_state = wire.encode_value(widget.snapshot())
    before_versions = wire.encode_value(widget.state.attribute_versions())
    n_actions = 1000
    for i in range(n_actions):
        roll = rng.random()
        if roll < 0.35:
            client.filter_event({"substring": rng.choice(_VOCAB), "min_len": rng.randint(0, 9)})
        elif roll < 0.5:
            client.request_sync()
        elif roll < 0.8:
            attr = rng.choice(["data", "schema", "stats", "ghost"])
            client.send_raw(
                Message("dp1", MsgType.STATE_UPDATE, attr, {"i": i}, rng.randint(1, 10_000), Origin.FRONTEND)
            )
        elif roll < 0.9:
            client.send_raw(
                Message(
                    "dp1", MsgType.PAGE, "data", [{"i": i}], rng.randint(1, 10_000),
                    Origin.FRONTEND, wire.PageInfo(0, 1, f"{i:032x}"),
                )
            )
        else:
            client.send_raw(
                Message("dp1", MsgType.SYNC_REPLY, "", {"version": "loomxai/1", "attrs": {}}, i + 1, Origin.FRONTEND)
            )
        link.drain()
    elapsed = time.perf_counter() - started
    unchanged = (
        wire.encode_value(widget.snapshot()) == before_state
        and wire.encode_value(widget.state.attribute_versions()) == before_versions
    )
    return CriterionResult(
        "dp1-isolation",
        unchanged and elapsed < 5.0,
        {"actions": n_actions, "backend_unchanged": unchanged, "seconds": round(elapsed, 3)},
    )


# ---- criterion 2 -----------------------------------------------------------

def dp2_oracle() -> CriterionResult:
    started = time.perf_counter()
    rng = Random(202)
    pairs = 200
    mismatches = 0
    for i in range(pairs):
        ds = _random_dataset(rng)
        link, widget, client = loopback_widget(DataSelector, ds, widget_id=f"dp2-{i}")
        link.drain()
        last_valid = FilterSpec()
        for _ in range(rng.randint(1, 3)):
            if rng.random() < 0.15:  # an invalid spec the widget must drop
                bad = {"min_len": 9, "max_len": 1} if rng.random() < 0.5 else {
                    "predicates": [{"column": "ghost", "op": "eq", "value": 1}]
                }
                client.send_raw(
                    Message(widget.widget_id, MsgType.STATE_UPDATE, "selection_spec", bad, 10_000 + i, Origin.FRONTEND)
                )
            else:
                spec = _random_spec(rng, ds)
                client.apply_filter(spec.to_value())
                last_valid = spec
            link.drain()
        expected = to_records(apply_filter(ds, last_valid))
        if to_records(widget.selection()) != expected:
            mismatches += 1
    elapsed = time.perf_counter() - started
    return CriterionResult(
        "dp2-oracle",
        mismatches == 0 and elapsed < 10.0,
        {"pairs": pairs, "mismatches": mismatches, "seconds": round(elapsed, 3)},
    )


# ---- criterion 3 -----------------------------------------------------------

def _two_way_snapshot(state) -> dict[str, Any]:
    modes = state.attribute_versions()
    return {
        name: value
        for name, value in state.snapshot().items()
        if modes[name]["mode"] == SyncMode.TWO_WAY.value
    }


def dp_convergence() -> CriterionResult:
    started = time.perf_counter()
    rng = Random(303)
    sessions = 100
    divergent = 0
    for i in range(sessions):
        ds = _random_dataset(rng, max_rows=30, min_rows=2)
        if i % 2 == 0:
            link, widget, client = loopback_widget(DataSelector, ds, widget_id=f"conv-{i}")
            script = [("apply_filter", _random_spec(rng, ds).to_value()) for _ in range(rng.randint(1, 8))]
        else:
            labeled = ds if any(r.label for r in ds.records) else ingest(
                [{"text": r.text, "label": "pos"} for r in ds.records]
            )
            link, widget, client = loopback_widget(
                InferenceExplorer, labeled, toy_fit(labeled), widget_id=f"conv-{i}"
            )
            script = []
            for _ in range(rng.randint(1, 8)):
                if rng.random() < 0.5:
                    script.append(("submit_text", _words(rng, _VOCAB, 0, 4)))
                else:
                    script.append(
                        ("brush", {"x0": rng.uniform(-1, 1), "y0": rng.uniform(-1, 1),
                                   "x1": rng.uniform(-1, 1), "y1": rng.uniform(-1, 1)})
                    )
        headless_run(script, widget, client, link)
        if _two_way_snapshot(widget.state) != _two_way_snapshot(client.state):
            divergent += 1
    elapsed = time.perf_counter() - started
    return CriterionResult(
        "dp2-dp3-convergence",
        divergent == 0,
        {"sessions": sessions, "divergent": divergent, "seconds": round(elapsed, 3)},
    )


# ---- criterion 4 -----------------------------------------------------------

def dp3_exactly_once() -> CriterionResult:
    started = time.perf_counter()
    rng = Random(404)
    sessions = 30
    failures = []
    for i in range(sessions):
        config = DemoConfig(n_records=20, seed=1000 + i)
        ds = demo_data(config)
        clf = toy_fit(ds)
        link, widget, client = loopback_widget(InferenceExplorer, ds, clf, widget_id=f"once-{i}")
        firings = []
        widget.state.register_handler("pending_input", lambda old, new: firings.append(new))
        pools = class_pools(config)
        submissions = []
        for _ in range(rng.randint(1, 25)):
            if rng.random() < 0.2:
                submissions.append(rng.choice(["", "   ", "!!!"]))  # error inputs
            else:
                submissions.append(_words(rng, pools[rng.choice(config.classes)], 1, 5))
        headless_run([("submit_text", s) for s in submissions], widget, client, link)
        errors = sum(1 for s in submissions if not any(c.isalnum() for c in s))
        inferred = widget.state.get_attribute("inferred_points")
        ok = len(firings) == len(submissions) and len(inferred) == len(submissions) - errors
        if ok:
            for entry in inferred:
                if entry["label"] != clf.predict(entry["text"])["label"]:
                    ok = False
                    break
        if not ok:
            failures.append(i)
    elapsed = time.perf_counter() - started
    return CriterionResult(
        "dp3-exactly-once-callbacks",
        not failures,
        {"sessions": sessions, "failed_sessions": failures, "seconds": round(elapsed, 3)},
    )


# ---- criterion 5 -----------------------------------------------------------

def no_echo_loops() -> CriterionResult:
    started = time.perf_counter()
    rng = Random(505)
    sessions = 100
    actions_per_session = 500
    deadlocks = 0
    total_messages = 0
    for i in range(sessions):
        kind = i % 3
        ds = _random_dataset(rng, max_rows=20, min_rows=2)
        if kind == 0:
            link, widget, client = loopback_widget(DataExplorer, ds, widget_id=f"echo-{i}")
            choices: list[Callable[[], tuple]] = [
                lambda: ("filter_event", {"q": rng.random()}),
                lambda: ("sync",),
            ]
        elif kind == 1:
            link, widget, client = loopback_widget(DataSelector, ds, widget_id=f"echo-{i}")
            choices = [
                lambda: ("apply_filter", _random_spec(rng, ds).to_value()),
                lambda: ("sync",),
            ]
        else:
            labeled = ingest([{"text": r.text or "blank", "label": "pos"} for r in ds.records])
            link, widget, client = loopback_widget(
                InferenceExplorer, labeled, toy_fit(labeled), widget_id=f"echo-{i}", inferred_cap=25
            )
            choices = [
                lambda: ("submit_text", _words(rng, _VOCAB, 0, 3)),
                lambda: ("brush", {"x0": rng.uniform(-1, 1), "y0": rng.uniform(-1, 1),
                                   "x1": rng.uniform(-1, 1), "y1": rng.uniform(-1, 1)}),
                lambda: ("brush", None),
                lambda: ("sync",),
            ]
        script = [rng.choice(choices)() for _ in range(actions_per_session)]
        try:
            result = headless_run(script, widget, client, link)
            total_messages += len(result["messages"])
        except Deadlock:
            deadlocks += 1
    elapsed = time.perf_counter() - started
    return CriterionResult(
        "no-echo-loops",
        deadlocks == 0,
        {
            "sessions": sessions,
            "actions_per_session": actions_per_session,
            "deadlocks": deadlocks,
            "total_messages": total_messages,
            "seconds": round(elapsed, 3),
        },
    )


# ---- criterion 6 -----------------------------------------------------------

def _random_value(rng: Random, depth: int = 0) -> Any:
    roll = rng.random()
    if depth >= 3 or roll < 0.45:
        leaf = rng.random()
        if leaf < 0.15:
            return None
        if leaf < 0.3:
            return rng.random() < 0.5
        if leaf < 0.55:
            return rng.randint(-(2**53), 2**53)
        if leaf < 0.75:
            return rng.uniform(-1e6, 1e6)
        return "".join(rng.choices("abc é世xyz01", k=rng.randint(0, 10)))
    if roll < 0.75:
        return [_random_value(rng, depth + 1) for _ in range(rng.randint(0, 4))]
    return {
        "".join(rng.choices("klmnop", k=rng.randint(1, 5))): _random_value(rng, depth + 1)
        for _ in range(rng.randint(0, 4))
    }


def wire_round_trip() -> CriterionResult:
    started = time.perf_counter()
    rng = Random(606)
    n_messages = 10_000
    failures = 0
    types = [MsgType.STATE_UPDATE, MsgType.EVENT, MsgType.SYNC_REQUEST, MsgType.SYNC_REPLY]
    for _ in range(n_messages):
        msg = Message(
            widget_id="".join(rng.choices("wxyz09", k=rng.randint(0, 8))),
            msg_type=rng.choice(types),
            attr="".join(rng.choices("abc_", k=rng.randint(0, 6))),
            payload=_random_value(rng),
            seq=rng.randint(0, 2**31),
            origin=rng.choice([Origin.BACKEND, Origin.FRONTEND]),
        )
        text = wire.encode(msg)
        decoded = wire.decode(text)
        if decoded != msg or wire.encode(decoded) != text:
            failures += 1

    pagination_failures = 0
    for _ in range(100):
        rows = [_random_value(rng, depth=2) for _ in range(rng.randint(0, 60))]
        pages = wire.paginate(rows, rng.randint(1, 12))
        rng.shuffle(pages)
        if wire.reassemble(pages) != rows:
            pagination_failures += 1

    cap = 4096
    probe = wire.encode(Message("w", MsgType.STATE_UPDATE, "x", "", 1, Origin.BACKEND))
    overhead = wire.encoded_size(probe)
    at_cap = wire.encode(
        Message("w", MsgType.STATE_UPDATE, "x", "y" * (cap - overhead), 1, Origin.BACKEND)
    )
    over_cap = wire.encode(
        Message("w", MsgType.STATE_UPDATE, "x", "y" * (cap - overhead + 1), 1, Origin.BACKEND)
    )
    cap_ok = wire.encoded_size(at_cap) == cap and wire.encoded_size(over_cap) == cap + 1
    try:
        wire.ensure_within_cap(at_cap, cap)
    except wire.PayloadTooLarge:
        cap_ok = False
    try:
        wire.ensure_within_cap(over_cap, cap)
        cap_ok = False
    except wire.PayloadTooLarge:
        pass

    elapsed = time.perf_counter() - started
    return CriterionResult(
        "wire-round-trip",
        failures == 0 and pagination_failures == 0 and cap_ok,
        {
            "messages": n_messages,
            "round_trip_failures": failures,
            "pagination_failures": pagination_failures,
            "cap_boundary_ok": cap_ok,
            "seconds": round(elapsed, 3),
        },
    )


# ---- criterion 7 -----------------------------------------------------------

def geometry_oracles() -> CriterionResult:
    started = time.perf_counter()
    rng = Random(707)
    trials = 50
    knn_failures = 0
    rect_failures = 0
    for _ in range(trials):
        pts = [(rng.uniform(-10, 10), rng.uniform(-10, 10)) for _ in range(100)]
        query = (rng.uniform(-10, 10), rng.uniform(-10, 10))
        k = rng.randint(1, 100)
        oracle = sorted(
            range(100),
            key=lambda i: ((pts[i][0] - query[0]) ** 2 + (pts[i][1] - query[1]) ** 2, i),
        )[:k]
        if knn(pts, query, k) != oracle:
            knn_failures += 1
    for _ in range(trials):
        pts = [(rng.uniform(-10, 10), rng.uniform(-10, 10)) for _ in range(100)]
        xs = sorted((rng.uniform(-10, 10), rng.uniform(-10, 10)))
        ys = sorted((rng.uniform(-10, 10), rng.uniform(-10, 10)))
        rect = {"x0": xs[1], "y0": ys[0], "x1": xs[0], "y1": ys[1]}
        oracle_rect = [
            i for i, (x, y) in enumerate(pts) if xs[0] <= x <= xs[1] and ys[0] <= y <= ys[1]
        ]
        if points_in_rect(pts, rect) != oracle_rect:
            rect_failures += 1
    elapsed = time.perf_counter() - started
    return CriterionResult(
        "geometry-oracles",
        knn_failures == 0 and rect_failures == 0,
        {
            "trials": trials,
            "knn_failures": knn_failures,
            "rect_failures": rect_failures,
            "seconds": round(elapsed, 3),
        },
    )


# ---- criterion 8 -----------------------------------------------------------

def projector_self_consistency() -> CriterionResult:
    started = time.perf_counter()
    rng = np.random.default_rng(808)
    max_rel_err = 0.0
    byte_identical = True
    for _ in range(20):
        x = rng.normal(size=(40, 12))
        proj = pca_fit(x)
        coords = proj.fitted_coords()
        again = pca_fit(x).fitted_coords()
        byte_identical = byte_identical and coords.tobytes() == again.tobytes()
        for i in range(len(x)):
            err = float(np.max(np.abs(proj.transform(x[i]) - coords[i])))
            rel = err / (1.0 + float(np.max(np.abs(coords[i]))))
            max_rel_err = max(max_rel_err, rel)

    direction = rng.normal(size=10)
    base = rng.normal(size=10)
    line = np.stack([base + t * direction for t in np.linspace(-2, 2, 9)])
    rank1_second = float(np.max(np.abs(pca_fit(line).fitted_coords()[:, 1])))

    elapsed = time.perf_counter() - started
    return CriterionResult(
        "projector-self-consistency",
        max_rel_err <= 1e-6 and byte_identical and rank1_second <= 1e-6,
        {
            "max_relative_error": max_rel_err,
            "byte_identical_refit": byte_identical,
            "rank1_second_coordinate": rank1_second,
            "seconds": round(elapsed, 3),
        },
    )


# ---- criterion 9 -----------------------------------------------------------

def end_to_end_scenario() -> CriterionResult:
    started = time.perf_counter()
    config = DemoConfig(n_records=200, classes=("alpha", "beta"), seed=7)
    ds = demo_data(config)
    clf = toy_fit(ds)
    link, widget, client = loopback_widget(InferenceExplorer, ds, clf, widget_id="e2e")
    link.drain()
    pools = class_pools(config)
    class_a = config.classes[0]
    sentence = " ".join(pools[class_a][:5])
    client.submit_text(sentence)
    link.drain()
    inferred = widget.state.get_attribute("inferred_points")
    label_ok = len(inferred) == 1 and inferred[0]["label"] == class_a
    majority = 0
    if label_ok:
        points = widget.state.get_attribute("points")
        coords = [(p["x"], p["y"]) for p in points]
        neighbor_ids = knn(coords, (inferred[0]["x"], inferred[0]["y"]), 10)
        majority = sum(1 for i in neighbor_ids if points[i]["label"] == class_a)
    elapsed = time.perf_counter() - started
    return CriterionResult(
        "end-to-end-scenario",
        label_ok and majority > 5 and elapsed < 10.0,
        {
            "predicted_label": inferred[0]["label"] if inferred else None,
            "expected_label": class_a,
            "neighbors_majority": majority,
            "seconds": round(elapsed, 3),
        },
    )


CRITERIA: dict[str, Callable[[], CriterionResult]] = {
    "dp1-isolation": dp1_isolation,
    "dp2-oracle": dp2_oracle,
    "dp2-dp3-convergence": dp_convergence,
    "dp3-exactly-once-callbacks": dp3_exactly_once,
    "no-echo-loops": no_echo_loops,
    "wire-round-trip": wire_round_trip,
    "geometry-oracles": geometry_oracles,
    "projector-self-consistency": projector_self_consistency,
    "end-to-end-scenario": end_to_end_scenario,
}

SUITES: dict[str, list[str]] = {
    "all": list(CRITERIA),
    "dp1": ["dp1-isolation"],
    "dp2": ["dp2-oracle", "dp2-dp3-convergence"],
    "dp3": ["dp3-exactly-once-callbacks"],
    "echo": ["no-echo-loops"],
    "wire": ["wire-round-trip"],
    "geometry": ["geometry-oracles"],
    "projector": ["projector-self-consistency"],
    "endtoend": ["end-to-end-scenario"],
}


def run_suite(suite: str) -> list[CriterionResult]:
    if suite not in SUITES:
        raise UnknownSuite(suite)
    return [CRITERIA[name]() for name in SUITES[suite]]


def write_report(results: list[CriterionResult], path: Any) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for result in results:
            fh.write(result.to_line() + "\n")
