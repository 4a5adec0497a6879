"""Command line entry points: run, replay, report, serve."""
from __future__ import annotations

import json
import os
import sys

import click

from . import harness
from .errors import AgoraError, ParseError, ReplayDivergence
from .scenario import load_scenario

SUCCESS_OUTCOMES = {"Provisioned", "Abandoned"}


@click.group()
def main():
    """Deterministic service-orchestration simulator."""


@main.command("run")
@click.argument("scenario_path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the run record (JSON lines) here.")
def run_cmd(scenario_path, seed, out_path):
    try:
        scenario = load_scenario(scenario_path)
    except (ParseError, AgoraError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    record = harness.run(scenario, seed=seed)
    if out_path:
        record.save(out_path)
    metrics = harness.report(record)
    click.echo(json.dumps(metrics, indent=2))
    sys.exit(0 if record.outcome in SUCCESS_OUTCOMES else 2)


@main.command("replay")
@click.argument("record_path", type=click.Path(exists=True))
def replay_cmd(record_path):
    try:
        record = harness.load_record(record_path)
        harness.replay(record)
    except ReplayDivergence as exc:
        click.echo(f"divergence at line {exc.line_no}", err=True)
        click.echo(f"  recorded: {exc.expected}", err=True)
        click.echo(f"  fresh:    {exc.actual}", err=True)
        sys.exit(2)
    except AgoraError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    click.echo("replay ok")
    sys.exit(0)


@main.command("report")
@click.argument("record_path", type=click.Path(exists=True))
def report_cmd(record_path):
    try:
        record = harness.load_record(record_path)
        metrics = harness.report(record)
    except AgoraError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    click.echo(json.dumps(metrics, indent=2))
    sys.exit(0)


@main.command("serve")
@click.option("--bind", default="127.0.0.1:8000", help="host:port to listen on.")
@click.option("--scenario-dir", default=None,
              help="Directory of scenario files (default $AGORA_SCENARIO_DIR).")
def serve_cmd(bind, scenario_dir):
    import uvicorn

    from .api import create_app

    scenario_dir = scenario_dir or os.environ.get("AGORA_SCENARIO_DIR")
    app = create_app()
    app.state.scenario_dir = scenario_dir
    host, _, port = bind.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000),
                log_level="warning")


if __name__ == "__main__":
    main()
