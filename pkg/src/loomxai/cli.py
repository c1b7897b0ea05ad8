"""Developer CLI: demo data, the standalone host, and the acceptance runner.

The heavy lifting lives in the library; every subcommand here is a thin
client over it (serve just boots uvicorn around the service app).
"""

from __future__ import annotations

import socket
import sys
from pathlib import Path

import click

from . import wire
from .acceptance import UnknownSuite, run_suite, write_report
from .demo import BadConfig, DemoConfig, write_demo_jsonl


class PortInUse(Exception):
    pass


@click.group()
def main() -> None:
    """Embeddable XAI widgets: demo data, standalone host, acceptance runner."""


@main.command()
@click.option("--n", "n_records", default=200, show_default=True, help="number of records")
@click.option("--classes", default="pos,neg", show_default=True, help="comma-separated labels")
@click.option("--seed", default=7, show_default=True)
@click.option("--vocab", "vocab_size", default=30, show_default=True, help="tokens per class")
@click.option("--out", default="demo.jsonl", show_default=True, type=click.Path(dir_okay=False))
def data(n_records: int, classes: str, seed: int, vocab_size: int, out: str) -> None:
    """Write a deterministic synthetic labeled dataset as jsonl."""
    config = DemoConfig(
        n_records=n_records,
        classes=tuple(c for c in classes.split(",") if c),
        seed=seed,
        vocab_size=vocab_size,
    )
    try:
        ds = write_demo_jsonl(config, out)
    except BadConfig as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {len(ds)} records to {out}")


@main.command()
@click.option("--suite", default="all", show_default=True)
@click.option("--report", "report_path", default=None, type=click.Path(dir_okay=False))
@click.option("--list", "list_suites", is_flag=True, help="list known suites and exit")
def accept(suite: str, report_path: str | None, list_suites: bool) -> None:
    """Run acceptance criteria headlessly; exit 0 iff all selected pass."""
    from .acceptance import SUITES

    if list_suites:
        for name, members in SUITES.items():
            click.echo(f"{name}: {', '.join(members)}")
        return
    try:
        results = run_suite(suite)
    except UnknownSuite as exc:
        raise click.ClickException(str(exc))
    for result in results:
        click.echo(result.to_line())
    if report_path:
        write_report(results, report_path)
    sys.exit(0 if all(r.passed for r in results) else 1)


@main.command()
@click.option(
    "--widget",
    type=click.Choice(["data_explorer", "data_selector", "inference_explorer"]),
    default="data_selector",
    show_default=True,
)
@click.option("--data", "data_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="jsonl dataset; a seeded demo dataset is generated when omitted")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8787, show_default=True)
@click.option("--page-size", default=wire.DEFAULT_PAGE_SIZE, show_default=True)
@click.option("--payload-cap", default=wire.DEFAULT_PAYLOAD_CAP, show_default=True,
              envvar="LOOMXAI_PAYLOAD_CAP")
@click.option("--seed", default=7, show_default=True, help="seed for the generated demo dataset")
@click.option("--n", "n_records", default=200, show_default=True, help="demo dataset size")
def serve(
    widget: str,
    data_path: str | None,
    host: str,
    port: int,
    page_size: int,
    payload_cap: int,
    seed: int,
    n_records: int,
) -> None:
    """Host one widget for the browser view over the socket transport."""
    import uvicorn

    from .service import SessionManager, create_app
    from .service.schemas import CreateSessionRequest, SessionOptions

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    except OSError:
        raise click.ClickException(str(PortInUse(f"{host}:{port} is already bound")))
    finally:
        probe.close()

    if data_path is None:
        demo_path = Path(f"demo-{seed}.jsonl")
        write_demo_jsonl(DemoConfig(n_records=n_records, seed=seed), demo_path)
        data_path = str(demo_path)
        click.echo(f"generated demo dataset at {data_path}")

    manager = SessionManager()
    app = create_app(manager)
    session = manager.create(
        CreateSessionRequest(
            widget=widget,
            jsonl_path=data_path,
            options=SessionOptions(page_size=page_size, payload_cap=payload_cap),
        )
    )
    click.echo(f"session {session.session_id} ({widget}) on ws://{host}:{port}/sessions/{session.session_id}/ws")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.option("--url", required=True, help="ws://host:port/sessions/<id>/ws")
@click.option("--script", "script_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="file with one encoded message per line to replay")
@click.option("--timeout", default=2.0, show_default=True, help="seconds to wait for replies")
def attach(url: str, script_path: str | None, timeout: float) -> None:
    """Attach to a running host as a thin view client and print traffic."""
    from websockets.sync.client import connect

    lines: list[str] = []
    if script_path:
        lines = [l for l in Path(script_path).read_text(encoding="utf-8").splitlines() if l]
    with connect(url) as ws:
        widget_id = None
        for line in lines:
            msg = wire.decode(line)  # validate before sending
            widget_id = widget_id or msg.widget_id
            ws.send(line)
        if not lines:
            # Bare attach: learn the widget id from the first inbound frame,
            # then request a snapshot.
            try:
                first = ws.recv(timeout=timeout)
                click.echo(f"<- {first}")
                widget_id = wire.decode(first).widget_id
            except TimeoutError:
                raise click.ClickException("no initial traffic; is the session id right?")
            ws.send(
                wire.encode(
                    wire.Message(
                        widget_id=widget_id,
                        msg_type=wire.MsgType.SYNC_REQUEST,
                        payload={"version": wire.WIRE_VERSION},
                        seq=1,
                        origin=wire.Origin.FRONTEND,
                    )
                )
            )
        while True:
            try:
                frame = ws.recv(timeout=timeout)
            except TimeoutError:
                break
            click.echo(f"<- {frame}")


if __name__ == "__main__":
    main()
