"""Turn finalized edit trajectories into training/eval instances.

Every adjacent pair of finalized edits yields one instance: the file state
and history up to edit T, with edit T+1 as ground truth (its location, and
the editable window rewritten by it). Instances are then labeled:

* ``location_change`` mode marks an instance keep when the next edit lands
  inside the editable window around the current cursor (no navigation
  needed), do otherwise.
* ``relevance_judge`` mode asks a judge model whether the next edit is a
  predictable continuation of the history; irrelevant instances are
  repurposed as keep samples (location becomes the keep token, the target
  window stays unmodified).

Finally the keep fraction is balanced by seeded downsampling of keep samples
only; do samples are never fabricated or dropped.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal

from .diff import (
    CodeSnapshot,
    DeltaScript,
    LineRange,
    apply_diff,
    diff_lines,
    region_split,
    render_numbered_diff,
    shift_delta,
    split_lines,
)
from .metrics import KEEP, Location
from .model_io import (
    BackendError,
    BackendTimeout,
    CompletionBackend,
    JUDGE_SYSTEM,
    ModelBackend,
    PromptBundle,
    complete,
    _render_history_block,
)
from .trajectory import EditEvent, TrajectoryState

LabelingMode = Literal["relevance_judge", "location_change"]


class DatasetError(Exception):
    """Base class for dataset-pipeline errors."""


class AlignmentError(DatasetError):
    """Snapshots do not line up with the trajectory's deltas."""


class BalanceImpossible(DatasetError):
    """The requested keep ratio cannot be reached by downsampling keeps."""


class SchemaError(DatasetError):
    """A dataset row is missing fields or has wrong types."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class JudgeUnavailable(DatasetError):
    """The relevance judge backend cannot be reached."""


class UnparseableVerdict(DatasetError):
    """The judge answered, but not with a RELEVANT/IRRELEVANT verdict."""


@dataclass(frozen=True)
class DatasetConfig:
    """Knobs for instance formulation, labeling, and balancing."""

    history_window: int = 3
    keep_ratio: float = 0.20
    labeling_mode: LabelingMode = "location_change"
    editable_window_radius: int = 16
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.keep_ratio <= 1.0:
            raise ValueError("keep_ratio must be in [0, 1]")
        if self.editable_window_radius < 1:
            raise ValueError("editable_window_radius must be >= 1")
        if self.history_window < 1:
            raise ValueError("history_window must be >= 1")


@dataclass(frozen=True)
class RelevanceVerdict:
    """Judge outcome for one instance."""

    relevant: bool
    rationale: str = ""


@dataclass(frozen=True)
class EditInstance:
    """One training/eval tuple: current state, history, and the ground-truth next edit."""

    current: CodeSnapshot
    history: tuple[str, ...]
    gt_location: Location
    gt_edit: str
    label_kind: Literal["do", "keep"]
    language_tag: str
    window_start: int
    window_pre: str
    task: Literal["location", "edit"] = "edit"


def _window_bounds(line: int, radius: int, file_lines: int, edit_end: int | None = None) -> LineRange:
    start = max(1, line - radius)
    end = min(file_lines, max(line + radius, edit_end if edit_end is not None else 0))
    return LineRange(start, max(start - 1, end))


def formulate_instances(
    trajectory: list[DeltaScript],
    snapshots: list[CodeSnapshot],
    cfg: DatasetConfig,
) -> list[EditInstance]:
    """One do-candidate instance per adjacent pair of finalized edits, oldest first.

    ``snapshots[i]`` must be the file state before ``trajectory[i]``; raises
    AlignmentError when applying a delta to its snapshot does not produce the
    next snapshot.
    """
    if len(snapshots) != len(trajectory):
        raise AlignmentError(
            f"{len(trajectory)} deltas need {len(trajectory)} snapshots, got {len(snapshots)}"
        )
    texts: list[str] = []
    for i, (snap, delta) in enumerate(zip(snapshots, trajectory)):
        try:
            after = apply_diff(snap.text, delta)
        except Exception as exc:
            raise AlignmentError(f"delta {i} does not apply to snapshot {i}: {exc}") from exc
        if i + 1 < len(snapshots) and after != snapshots[i + 1].text:
            raise AlignmentError(f"applying delta {i} does not yield snapshot {i + 1}")
        texts.append(after)

    instances: list[EditInstance] = []
    for i in range(len(trajectory) - 1):
        current_text = texts[i]
        file_lines = split_lines(current_text)
        done = trajectory[i]
        nxt = trajectory[i + 1]
        assert done.post_range is not None and nxt.pre_range is not None
        cursor = min(done.post_range.start, max(1, len(file_lines)))
        language = snapshots[i].language_tag
        current = CodeSnapshot(current_text, cursor_line=cursor, language_tag=language)

        target = min(nxt.pre_range.start, max(1, len(file_lines)))
        window = _window_bounds(
            target, cfg.editable_window_radius, len(file_lines), edit_end=nxt.pre_range.end
        )
        window_pre = "\n".join(file_lines[window.start - 1 : window.end])
        post_lines = split_lines(texts[i + 1])
        gt_edit = "\n".join(post_lines[window.start - 1 : window.end + nxt.shift])

        rendered = [render_numbered_diff(d) for d in trajectory[: i + 1]]
        instances.append(
            EditInstance(
                current=current,
                history=tuple(rendered[-cfg.history_window :]),
                gt_location=target,
                gt_edit=gt_edit,
                label_kind="do",
                language_tag=language,
                window_start=window.start,
                window_pre=window_pre,
            )
        )
    return instances


def _candidate_diff(instance: EditInstance) -> str:
    delta = diff_lines(region_split(instance.window_pre), region_split(instance.gt_edit))
    return render_numbered_diff(shift_delta(delta, instance.window_start - 1))


def build_judge_prompt(instance: EditInstance) -> PromptBundle:
    """Rubric prompt: the history blocks plus the candidate edit as a numbered diff."""
    user = "\n".join(
        [
            _render_history_block(list(instance.history)),
            "",
            "CANDIDATE NEXT EDIT (against the current file):",
            _candidate_diff(instance) or "(no textual change)",
            "",
            "Is the candidate a predictable continuation of the edit history?",
        ]
    )
    stable = len(JUDGE_SYSTEM.encode("utf-8"))
    return PromptBundle(system=JUDGE_SYSTEM, user=user, role="judge", stable_prefix_len=stable)


def judge_relevance(
    instance: EditInstance, judge: ModelBackend | CompletionBackend
) -> RelevanceVerdict:
    """Ask the judge backend whether the instance's edit follows from its history."""
    bundle = build_judge_prompt(instance)
    try:
        result = complete(judge, bundle)
    except (BackendError, BackendTimeout) as exc:
        raise JudgeUnavailable(str(exc)) from exc
    for line in result.text.split("\n"):
        word = line.strip()
        if not word:
            continue
        lowered = word.lower()
        if lowered.startswith("relevant"):
            return RelevanceVerdict(relevant=True, rationale=result.text.strip())
        if lowered.startswith("irrelevant"):
            return RelevanceVerdict(relevant=False, rationale=result.text.strip())
        break
    raise UnparseableVerdict(f"no verdict in judge output: {result.text[:120]!r}")


def label_instance(instance: EditInstance, verdict: RelevanceVerdict | None) -> EditInstance:
    """Apply a judge verdict: relevant keeps the ground truth, irrelevant repurposes as keep."""
    if verdict is None or verdict.relevant:
        return instance
    return replace(instance, label_kind="keep", gt_location=KEEP, gt_edit=instance.window_pre)


def label_by_location_change(instance: EditInstance, cfg: DatasetConfig) -> EditInstance:
    """Benchmark-style labeling: keep when the next edit stays in the cursor's window."""
    cursor = instance.current.cursor_line or 1
    file_lines = len(split_lines(instance.current.text))
    cursor_window = _window_bounds(cursor, cfg.editable_window_radius, file_lines)
    assert isinstance(instance.gt_location, int)
    if cursor_window.start <= instance.gt_location <= cursor_window.end:
        return replace(instance, label_kind="keep", gt_location=KEEP, gt_edit=instance.window_pre)
    return instance


def balance_keep_ratio(samples: list[EditInstance], cfg: DatasetConfig) -> list[EditInstance]:
    """Downsample keep samples (seeded, order-preserving) to hit cfg.keep_ratio within one sample."""
    do_count = sum(1 for s in samples if s.label_kind == "do")
    keep_indices = [i for i, s in enumerate(samples) if s.label_kind == "keep"]
    ratio = cfg.keep_ratio

    if ratio == 0.0:
        return [s for s in samples if s.label_kind == "do"]
    best_k = None
    best_err = None
    for k in range(len(keep_indices) + 1):
        total = do_count + k
        if total == 0:
            continue
        err = abs(k / total - ratio)
        # Prefer larger k on ties: keep as much data as the ratio allows.
        if best_err is None or err < best_err or (err == best_err and k > best_k):
            best_err = err
            best_k = k
    if best_k is None or best_err is None or best_err > 1.0 / (do_count + best_k):
        raise BalanceImpossible(
            f"cannot reach keep ratio {ratio} from {do_count} do + {len(keep_indices)} keep "
            "by downsampling keeps"
        )
    rng = random.Random(cfg.seed)
    chosen = set(rng.sample(keep_indices, best_k))
    return [s for i, s in enumerate(samples) if s.label_kind == "do" or i in chosen]


@dataclass
class BuildResult:
    """Pipeline output: labeled+balanced samples plus quarantined ones (unparseable verdicts)."""

    samples: list[EditInstance]
    quarantined: list[EditInstance] = field(default_factory=list)
    judge_errors: list[str] = field(default_factory=list)


def build_dataset(
    events: list[EditEvent],
    cfg: DatasetConfig,
    language: str = "",
    task: Literal["location", "edit"] = "edit",
    judge: ModelBackend | CompletionBackend | None = None,
    merge_gap: int = 0,
    judge_concurrency: int = 4,
) -> BuildResult:
    """Full pipeline: replay events, formulate, label per cfg.labeling_mode, balance.

    Judging runs up to ``judge_concurrency`` requests in parallel; outputs keep
    instance order regardless of completion order.
    """
    state = TrajectoryState(merge_gap=merge_gap)
    for event in events:
        state.ingest(event)
    deltas = state.finalize()
    if state.initial_text is None:
        return BuildResult(samples=[])

    snapshots: list[CodeSnapshot] = []
    text = state.initial_text
    for delta in deltas:
        snapshots.append(CodeSnapshot(text, language_tag=language))
        text = apply_diff(text, delta)
    candidates = formulate_instances(deltas, snapshots, cfg)

    labeled: list[EditInstance] = []
    quarantined: list[EditInstance] = []
    errors: list[str] = []
    if cfg.labeling_mode == "location_change":
        labeled = [label_by_location_change(inst, cfg) for inst in candidates]
    else:
        if judge is None:
            raise JudgeUnavailable("relevance_judge mode needs a judge backend")

        def ask(instance: EditInstance) -> RelevanceVerdict | UnparseableVerdict:
            try:
                return judge_relevance(instance, judge)
            except UnparseableVerdict as exc:
                return exc

        with ThreadPoolExecutor(max_workers=max(1, judge_concurrency)) as pool:
            verdicts = list(pool.map(ask, candidates))
        for instance, verdict in zip(candidates, verdicts):
            if isinstance(verdict, UnparseableVerdict):
                quarantined.append(instance)
                errors.append(str(verdict))
            else:
                labeled.append(label_instance(instance, verdict))

    balanced = balance_keep_ratio(labeled, cfg) if labeled else []
    balanced = [replace(s, task=task) for s in balanced]
    return BuildResult(samples=balanced, quarantined=quarantined, judge_errors=errors)


_ROW_KEYS = {
    "task": str,
    "language": str,
    "current": str,
    "cursor_line": int,
    "history": list,
    "label_kind": str,
    "gt_location": (int, str),
    "window_start": int,
    "window_pre": str,
    "gt_edit": str,
    "meta": dict,
}


def _instance_to_row(instance: EditInstance, cfg: DatasetConfig) -> dict:
    return {
        "task": instance.task,
        "language": instance.language_tag,
        "current": instance.current.text,
        "cursor_line": instance.current.cursor_line or 1,
        "history": list(instance.history),
        "label_kind": instance.label_kind,
        "gt_location": instance.gt_location,
        "window_start": instance.window_start,
        "window_pre": instance.window_pre,
        "gt_edit": instance.gt_edit,
        "meta": {
            "labeling_mode": cfg.labeling_mode,
            "history_window": cfg.history_window,
            "seed": cfg.seed,
            "prompt_version": "1",
        },
    }


def _row_to_instance(row: dict, line_no: int) -> EditInstance:
    for key, expected in _ROW_KEYS.items():
        if key not in row:
            raise SchemaError(line_no, f"missing field {key!r}")
        if not isinstance(row[key], expected):  # type: ignore[arg-type]
            raise SchemaError(line_no, f"field {key!r} has wrong type")
    if row["task"] not in ("location", "edit"):
        raise SchemaError(line_no, f"bad task {row['task']!r}")
    if row["label_kind"] not in ("do", "keep"):
        raise SchemaError(line_no, f"bad label_kind {row['label_kind']!r}")
    if isinstance(row["gt_location"], str) and row["gt_location"] != KEEP:
        raise SchemaError(line_no, f"bad gt_location {row['gt_location']!r}")
    if not all(isinstance(h, str) for h in row["history"]):
        raise SchemaError(line_no, "history entries must be strings")
    try:
        current = CodeSnapshot(
            row["current"], cursor_line=row["cursor_line"], language_tag=row["language"]
        )
    except ValueError as exc:
        raise SchemaError(line_no, str(exc)) from exc
    return EditInstance(
        current=current,
        history=tuple(row["history"]),
        gt_location=row["gt_location"],
        gt_edit=row["gt_edit"],
        label_kind=row["label_kind"],
        language_tag=row["language"],
        window_start=row["window_start"],
        window_pre=row["window_pre"],
        task=row["task"],
    )


def write_dataset(samples: list[EditInstance], path: str | Path, cfg: DatasetConfig) -> int:
    """Write samples as JSONL (deterministic byte-for-byte for fixed inputs); returns the count."""
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(_instance_to_row(sample, cfg), ensure_ascii=False, sort_keys=True) + "\n")
    return len(samples)


def read_dataset(path: str | Path) -> list[EditInstance]:
    """Read a JSONL dataset; raises SchemaError with the offending line number."""
    samples: list[EditInstance] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(line_no, f"not valid JSON: {exc}") from exc
            if not isinstance(row, dict):
                raise SchemaError(line_no, "row is not an object")
            samples.append(_row_to_instance(row, line_no))
    return samples
