"""Command-line front door: diff, replay, dataset build, eval run, serve, mock-backend.

Configuration precedence is flags > environment > config file > defaults.
Every flag has an environment variable under the NEXTEDIT_ prefix (e.g.
``NEXTEDIT_EVAL_RUN_HISTORY_WINDOW``); ``--config`` points at a JSON file
whose top-level keys are subcommand paths ("eval run", "serve", ...) mapping
flag names to values. Exit codes: 0 success, 1 operational error, 2 usage.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .dataset import (
    BalanceImpossible,
    DatasetConfig,
    DatasetError,
    JudgeUnavailable,
    build_dataset,
    read_dataset,
    write_dataset,
)
from .diff import DiffError, compute_diff, render_numbered_diff
from .eval_harness import build_mock_table, emit_report, policy_backend, run_eval
from .model_io import (
    BackendError,
    BackendTimeout,
    ModelBackend,
    ModelIOError,
    ScriptedBackend,
    SequenceBackend,
    make_backend,
    write_mock_table,
)
from .trajectory import TrajectoryError, read_event_log

OPERATIONAL_ERRORS = (
    DiffError,
    TrajectoryError,
    DatasetError,
    ModelIOError,
    BalanceImpossible,
    JudgeUnavailable,
    BackendError,
    BackendTimeout,
    OSError,
)


def _load_config_map(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    default_map: dict = {}
    for key, value in raw.items():
        cursor = default_map
        parts = key.split()
        for part in parts[:-1]:
            cursor = cursor.setdefault(part, {})
        cursor[parts[-1]] = value
    return default_map


def _maybe_dump(ctx: click.Context, dump: bool) -> None:
    if dump:
        effective = {k: v for k, v in ctx.params.items() if k != "dump_config"}
        click.echo(json.dumps(effective, indent=2, sort_keys=True, default=str))
        ctx.exit(0)


@click.group(context_settings={"auto_envvar_prefix": "NEXTEDIT"})
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON config file; keys are subcommand paths mapping flag names to values.")
@click.pass_context
def cli(ctx: click.Context, config_path: str | None):
    """Edit-trajectory tooling: diffs, replay, datasets, eval, and the suggestion service."""
    ctx.default_map = _load_config_map(config_path)


@cli.command("diff")
@click.argument("pre_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("post_file", type=click.Path(exists=True, dir_okay=False))
def diff_cmd(pre_file: str, post_file: str):
    """Print the numbered diff between two files."""
    pre = Path(pre_file).read_text(encoding="utf-8")
    post = Path(post_file).read_text(encoding="utf-8")
    out = render_numbered_diff(compute_diff(pre, post))
    if out:
        click.echo(out)


@cli.command("replay")
@click.argument("events_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--merge-gap", default=0, show_default=True, help="Merge deltas within this many lines.")
def replay_cmd(events_file: str, merge_gap: int):
    """Replay an event log and print the finalized edit history."""
    from .trajectory import TrajectoryState

    events = read_event_log(events_file)
    state = TrajectoryState(merge_gap=merge_gap)
    for event in events:
        state.ingest(event)
    for i, delta in enumerate(state.finalize(), start=1):
        click.echo(f"=== edit {i} ===")
        click.echo(render_numbered_diff(delta))


@cli.group("dataset")
def dataset_group():
    """Dataset pipeline commands."""


@dataset_group.command("build")
@click.argument("events_files", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--task", type=click.Choice(["location", "edit"]), default="edit", show_default=True)
@click.option("--language", default="", help="Language tag recorded on every sample.")
@click.option("--history-window", default=3, show_default=True)
@click.option("--keep-ratio", default=0.20, show_default=True)
@click.option("--labeling-mode", type=click.Choice(["location_change", "relevance_judge"]),
              default="location_change", show_default=True)
@click.option("--radius", "editable_window_radius", default=16, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--judge-url", default=None, help="Judge endpoint for relevance_judge mode.")
@click.option("--judge-model", default="judge", show_default=True)
@click.option("--mock-table", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Scripted judge responses instead of a live endpoint.")
@click.option("--dump-config", is_flag=True, help="Print the effective config and exit.")
@click.pass_context
def dataset_build(ctx, events_files, out_path, task, language, history_window, keep_ratio,
                  labeling_mode, editable_window_radius, seed, judge_url, judge_model,
                  mock_table, dump_config):
    """Build a dataset from one or more event-log files."""
    _maybe_dump(ctx, dump_config)
    cfg = DatasetConfig(
        history_window=history_window,
        keep_ratio=keep_ratio,
        labeling_mode=labeling_mode,
        editable_window_radius=editable_window_radius,
        seed=seed,
    )
    judge = None
    if labeling_mode == "relevance_judge":
        if mock_table:
            judge = ScriptedBackend.from_file(mock_table)
        elif judge_url:
            judge = make_backend(ModelBackend(endpoint=judge_url, model_name=judge_model))
        else:
            raise click.ClickException("relevance_judge mode needs --judge-url or --mock-table")
    try:
        samples = []
        quarantined = []
        for path in events_files:
            events = read_event_log(path)
            result = build_dataset(events, cfg, language=language, task=task, judge=judge)
            samples.extend(result.samples)
            quarantined.extend(result.quarantined)
        count = write_dataset(samples, out_path, cfg)
        if quarantined:
            qpath = str(out_path) + ".quarantined.jsonl"
            write_dataset(quarantined, qpath, cfg)
            click.echo(f"quarantined {len(quarantined)} samples -> {qpath}", err=True)
        click.echo(f"wrote {count} samples -> {out_path}")
    except OPERATIONAL_ERRORS as exc:
        raise click.ClickException(str(exc)) from exc


@cli.group("eval")
def eval_group():
    """Evaluation commands."""


@eval_group.command("run")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--task", type=click.Choice(["location", "edit"]), default="edit", show_default=True)
@click.option("--backend-url", default=None, help="Chat-completions endpoint.")
@click.option("--model", "model_name", default="default", show_default=True)
@click.option("--mock-table", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--mock", "mock_policy", type=click.Choice(["perfect", "never_edit"]), default=None,
              help="Built-in oracle policy instead of a live backend.")
@click.option("--history-window", default=None, type=int, help="Re-window history to K.")
@click.option("--format", "fmt", type=click.Choice(["markdown", "csv", "json"]),
              default="markdown", show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path(dir_okay=False))
@click.option("--concurrency", default=4, show_default=True)
@click.option("--max-error-rate", default=0.0, show_default=True,
              help="Exit nonzero when the per-sample error rate exceeds this.")
@click.option("--dump-config", is_flag=True, help="Print the effective config and exit.")
@click.pass_context
def eval_run(ctx, dataset_path, task, backend_url, model_name, mock_table, mock_policy,
             history_window, fmt, out_path, concurrency, max_error_rate, dump_config):
    """Replay a dataset against a backend and print the metric table."""
    _maybe_dump(ctx, dump_config)
    try:
        if mock_policy:
            samples = read_dataset(dataset_path)
            backend = policy_backend(samples, task, mock_policy, k_override=history_window)
        elif mock_table:
            backend = ScriptedBackend.from_file(mock_table)
        elif backend_url:
            backend = make_backend(ModelBackend(endpoint=backend_url, model_name=model_name))
        else:
            raise click.ClickException("need one of --backend-url, --mock-table, --mock")
        report = run_eval(dataset_path, task, backend, k_override=history_window,
                          concurrency=concurrency)
        text = emit_report(report, fmt)
        if out_path:
            Path(out_path).write_text(text + "\n", encoding="utf-8")
            click.echo(f"wrote report -> {out_path}")
        else:
            click.echo(text)
        if report.n_dataset and report.n_errors / report.n_dataset > max_error_rate:
            raise click.ClickException(
                f"error rate {report.n_errors}/{report.n_dataset} exceeds {max_error_rate}"
            )
    except OPERATIONAL_ERRORS as exc:
        raise click.ClickException(str(exc)) from exc


@eval_group.command("mock-table")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--task", type=click.Choice(["location", "edit"]), default="edit", show_default=True)
@click.option("--policy", type=click.Choice(["perfect", "never_edit"]), default="perfect", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--history-window", default=None, type=int)
def eval_mock_table(dataset_path, task, policy, out_path, history_window):
    """Write a scripted response table answering a dataset per policy."""
    try:
        samples = read_dataset(dataset_path)
        rows = build_mock_table(samples, task, policy, k_override=history_window)
        write_mock_table(rows, out_path)
        click.echo(f"wrote {len(rows)} responses -> {out_path}")
    except OPERATIONAL_ERRORS as exc:
        raise click.ClickException(str(exc)) from exc


@cli.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True)
@click.option("--backend-url", default=None, help="Endpoint for both models unless overridden.")
@click.option("--location-url", default=None)
@click.option("--edit-url", default=None)
@click.option("--location-model", default="location", show_default=True)
@click.option("--edit-model", default="edit", show_default=True)
@click.option("--mock-table", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Serve against a scripted response table (both models).")
@click.option("--history-window", default=3, show_default=True)
@click.option("--window-radius", default=16, show_default=True)
@click.option("--session-ttl", default=1800.0, show_default=True)
@click.option("--max-sessions", default=256, show_default=True)
@click.option("--budget-ms", default=450.0, show_default=True)
@click.option("--dump-config", is_flag=True, help="Print the effective config and exit.")
@click.pass_context
def serve_cmd(ctx, host, port, backend_url, location_url, edit_url, location_model, edit_model,
              mock_table, history_window, window_radius, session_ttl, max_sessions, budget_ms,
              dump_config):
    """Run the suggestion service."""
    _maybe_dump(ctx, dump_config)
    import uvicorn

    from .service import ServiceConfig, SuggestionService, create_app

    if mock_table:
        location_backend = ScriptedBackend.from_file(mock_table)
        edit_backend = ScriptedBackend.from_file(mock_table)
    else:
        loc_url = location_url or backend_url
        ed_url = edit_url or backend_url
        if not loc_url or not ed_url:
            raise click.ClickException("need --backend-url (or --location-url/--edit-url) or --mock-table")
        location_backend = make_backend(ModelBackend(endpoint=loc_url, model_name=location_model))
        edit_backend = make_backend(ModelBackend(endpoint=ed_url, model_name=edit_model))
    config = ServiceConfig(
        history_window=history_window,
        window_radius=window_radius,
        session_ttl_s=session_ttl,
        max_sessions=max_sessions,
        latency_budget_ms=budget_ms,
    )
    service = SuggestionService(config, location_backend, edit_backend)
    uvicorn.run(create_app(service), host=host, port=port, log_level="info")


@cli.command("mock-backend")
@click.argument("table_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8091, show_default=True)
@click.option("--sequential", is_flag=True,
              help="Table rows are {model?, response}; serve them in order per model.")
def mock_backend_cmd(table_file, host, port, sequential):
    """Run a scripted chat-completions backend for demos and tests."""
    import uvicorn

    from .mock_server import create_mock_app

    uvicorn.run(create_mock_app(table_file, sequential=sequential), host=host, port=port,
                log_level="info")


def main() -> int:
    return cli(standalone_mode=True)


if __name__ == "__main__":
    sys.exit(main())
