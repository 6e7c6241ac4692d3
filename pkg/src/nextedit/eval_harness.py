"""Replay dataset files against a backend and aggregate do/keep metric tables.

Each sample is turned into a prompt (re-windowing history when a K override
is given), answered by the backend, parsed, and scored: location samples by
exact location accuracy, edit samples by edit similarity / exact match for
the do split and byte-identical preservation for the keep split. Results
aggregate per (language, split); the Average column is the unweighted mean
over languages. Backend failures are counted per sample and reported; they
never abort the run.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

from .dataset import EditInstance, read_dataset
from .metrics import (
    KEEP,
    EditScore,
    LocationScore,
    reward_edit,
    reward_location,
    round_half_up,
)
from .model_io import (
    BackendError,
    BackendTimeout,
    CompletionBackend,
    EmptyOutput,
    ModelBackend,
    PromptBundle,
    PromptConfig,
    ScriptedBackend,
    UnparseableOutput,
    build_edit_prompt,
    build_location_prompt,
    complete,
    parse_edit_output,
    parse_location_output,
    prompt_sha,
)

logger = logging.getLogger(__name__)

Task = Literal["location", "edit"]
MockPolicy = Literal["perfect", "never_edit"]


class DatasetTaskMismatch(Exception):
    """The dataset rows carry a different task than the eval was asked to run."""


@dataclass
class EvalCell:
    """Aggregates for one (language, split) cell; percentages in [0, 100]."""

    n: int = 0
    errors: int = 0
    es_sum: float = 0.0
    exact: int = 0
    correct: int = 0

    @property
    def es(self) -> float | None:
        return 100.0 * self.es_sum / self.n if self.n else None

    @property
    def emr(self) -> float | None:
        return 100.0 * self.exact / self.n if self.n else None

    @property
    def acc(self) -> float | None:
        return 100.0 * self.correct / self.n if self.n else None


@dataclass
class EvalReport:
    """Full eval outcome: per-(language, split) cells plus config echo and wall stats."""

    task: Task
    cells: dict[tuple[str, str], EvalCell] = field(default_factory=dict)
    history_window: int | None = None
    backend_id: str = ""
    n_dataset: int = 0
    n_scored: int = 0
    n_errors: int = 0
    wall_ms_total: float = 0.0
    wall_ms_max: float = 0.0

    @property
    def languages(self) -> list[str]:
        return sorted({lang for lang, _ in self.cells})

    def cell(self, language: str, split: str) -> EvalCell:
        return self.cells.setdefault((language, split), EvalCell())


def _windowed(history: tuple[str, ...], k: int | None) -> list[str]:
    entries = list(history)
    return entries[-k:] if k is not None else entries


def build_sample_prompt(
    sample: EditInstance, task: Task, k_override: int | None = None, prompt_cfg: PromptConfig | None = None
) -> PromptBundle:
    """The exact prompt run_eval sends for a sample; shared with mock-table building."""
    history = _windowed(sample.history, k_override)
    if task == "location":
        return build_location_prompt(sample.current, history, prompt_cfg)
    return build_edit_prompt(
        sample.current, history, sample.window_start, sample.window_pre, prompt_cfg
    )


def _score_location(sample: EditInstance, raw: str, cell: EvalCell) -> None:
    try:
        predicted = parse_location_output(raw)
    except UnparseableOutput:
        predicted = KEEP  # same degradation the serving path applies
    score: LocationScore = reward_location(predicted, sample.gt_location)
    cell.n += 1
    cell.correct += score.correct


def _score_edit(sample: EditInstance, raw: str, cell: EvalCell) -> None:
    try:
        predicted = parse_edit_output(raw, sample.window_pre)
    except EmptyOutput:
        predicted = ""
    cell.n += 1
    if sample.label_kind == "keep":
        cell.correct += predicted == sample.window_pre
        return
    score: EditScore = reward_edit(predicted, sample.gt_edit)
    cell.es_sum += score.es
    cell.exact += score.exact


def run_eval(
    dataset_path: str | Path,
    task: Task,
    backend: ModelBackend | CompletionBackend,
    k_override: int | None = None,
    concurrency: int = 4,
    prompt_cfg: PromptConfig | None = None,
) -> EvalReport:
    """Evaluate every sample in the dataset; backend errors are counted, not fatal."""
    samples = read_dataset(dataset_path)
    mismatched = [s for s in samples if s.task != task]
    if mismatched:
        raise DatasetTaskMismatch(
            f"{len(mismatched)} rows carry task {mismatched[0].task!r}, expected {task!r}"
        )
    report = EvalReport(task=task, history_window=k_override, backend_id=_backend_id(backend))
    report.n_dataset = len(samples)

    def ask(sample: EditInstance) -> tuple[str | None, float, str | None]:
        bundle = build_sample_prompt(sample, task, k_override, prompt_cfg)
        started = time.perf_counter()
        try:
            result = complete(backend, bundle)
        except (BackendError, BackendTimeout) as exc:
            return None, (time.perf_counter() - started) * 1000.0, str(exc)
        return result.text, (time.perf_counter() - started) * 1000.0, None

    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        outcomes = list(pool.map(ask, samples))

    for sample, (raw, wall_ms, error) in zip(samples, outcomes):
        report.wall_ms_total += wall_ms
        report.wall_ms_max = max(report.wall_ms_max, wall_ms)
        cell = report.cell(sample.language_tag or "unknown", sample.label_kind)
        if error is not None:
            cell.errors += 1
            report.n_errors += 1
            logger.warning("sample failed: %s", error)
            continue
        assert raw is not None
        if task == "location":
            _score_location(sample, raw, cell)
        else:
            _score_edit(sample, raw, cell)
        report.n_scored += 1
    return report


def _backend_id(backend: ModelBackend | CompletionBackend) -> str:
    if isinstance(backend, ModelBackend):
        return f"{backend.mode}:{backend.model_name}@{backend.endpoint or backend.mock_table}"
    return type(backend).__name__


def build_mock_table(
    samples: list[EditInstance],
    task: Task,
    policy: MockPolicy,
    k_override: int | None = None,
    prompt_cfg: PromptConfig | None = None,
) -> list[dict]:
    """Scripted response-table rows answering each sample per policy.

    perfect: the ground truth (location or fenced gt_edit).
    never_edit: always KEEP / the window unchanged.
    """
    rows = []
    for sample in samples:
        bundle = build_sample_prompt(sample, task, k_override, prompt_cfg)
        if task == "location":
            if policy == "perfect":
                answer = "KEEP" if sample.gt_location == KEEP else f"LINE {sample.gt_location}"
            else:
                answer = "KEEP"
        else:
            body = sample.gt_edit if policy == "perfect" else sample.window_pre
            answer = f"```\n{body}\n```"
        rows.append({"prompt_sha256": prompt_sha(bundle), "response": answer, "delay_ms": 0})
    return rows


def policy_backend(
    samples: list[EditInstance],
    task: Task,
    policy: MockPolicy,
    k_override: int | None = None,
    prompt_cfg: PromptConfig | None = None,
) -> ScriptedBackend:
    """In-process scripted backend answering the dataset per policy."""
    return ScriptedBackend(build_mock_table(samples, task, policy, k_override, prompt_cfg))


def report_numbers(report: EvalReport) -> dict:
    """Numeric view used by the json/csv emitters and tests; values pre-rounded."""
    columns = report.languages + ["Average"]
    out: dict = {
        "task": report.task,
        "history_window": report.history_window,
        "backend": report.backend_id,
        "n_dataset": report.n_dataset,
        "n_scored": report.n_scored,
        "n_errors": report.n_errors,
        "columns": {},
    }
    for lang in columns:
        entry: dict = {}
        for split in ("do", "keep"):
            if lang == "Average":
                per_lang = [
                    report.cells[(lg, split)]
                    for lg in report.languages
                    if (lg, split) in report.cells and report.cells[(lg, split)].n
                ]
                if not per_lang:
                    continue
                cell_entry: dict = {"n": sum(c.n for c in per_lang)}
                if report.task == "edit" and split == "do":
                    cell_entry["es"] = round_half_up(sum(c.es or 0 for c in per_lang) / len(per_lang), 2)
                    cell_entry["emr"] = round_half_up(sum(c.emr or 0 for c in per_lang) / len(per_lang), 1)
                else:
                    cell_entry["acc"] = round_half_up(sum(c.acc or 0 for c in per_lang) / len(per_lang), 1)
                entry[split] = cell_entry
                continue
            cell = report.cells.get((lang, split))
            if cell is None or cell.n == 0:
                continue
            cell_entry = {"n": cell.n, "errors": cell.errors}
            if report.task == "edit" and split == "do":
                cell_entry["es"] = round_half_up(cell.es or 0, 2)
                cell_entry["emr"] = round_half_up(cell.emr or 0, 1)
            else:
                cell_entry["acc"] = round_half_up(cell.acc or 0, 1)
            entry[split] = cell_entry
        out["columns"][lang] = entry
    return out


def emit_report(report: EvalReport, fmt: Literal["markdown", "csv", "json"] = "markdown") -> str:
    """Render a report; markdown mirrors the language-columns + Average table layout."""
    numbers = report_numbers(report)
    if fmt == "json":
        return json.dumps(numbers, indent=2, sort_keys=True)
    columns = report.languages + ["Average"]
    if fmt == "csv":
        lines = ["language,split,n,value"]
        for lang in columns:
            for split in ("do", "keep"):
                cell_entry = numbers["columns"][lang].get(split)
                if cell_entry is None:
                    continue
                if report.task == "edit" and split == "do":
                    value = f"{cell_entry['es']:.2f}/{cell_entry['emr']:.1f}%"
                else:
                    value = f"{cell_entry['acc']:.1f}%"
                lines.append(f"{lang},{split},{cell_entry['n']},{value}")
        return "\n".join(lines)

    do_label = "do ES / EMR" if report.task == "edit" else "do Acc"
    header = "| Metric | " + " | ".join(columns) + " |"
    rule = "|---" * (len(columns) + 1) + "|"
    rows = []
    for split, label in (("do", do_label), ("keep", "keep Acc")):
        cells = []
        for lang in columns:
            cell_entry = numbers["columns"][lang].get(split)
            if cell_entry is None:
                cells.append("-")
            elif report.task == "edit" and split == "do":
                cells.append(f"{cell_entry['es']:.2f}/{cell_entry['emr']:.1f}%")
            else:
                cells.append(f"{cell_entry['acc']:.1f}%")
        rows.append(f"| {label} | " + " | ".join(cells) + " |")
    counts = []
    for lang in columns:
        per = numbers["columns"][lang]
        counts.append(f"{per.get('do', {}).get('n', 0)}/{per.get('keep', {}).get('n', 0)}")
    rows.append("| n (do/keep) | " + " | ".join(counts) + " |")
    meta = (
        f"task: {report.task} | backend: {report.backend_id} | "
        f"K: {report.history_window if report.history_window is not None else 'dataset'} | "
        f"scored: {report.n_scored}/{report.n_dataset} | errors: {report.n_errors}"
    )
    return "\n".join([header, rule, *rows, "", meta])
