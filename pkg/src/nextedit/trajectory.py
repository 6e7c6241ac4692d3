"""Edit-trajectory tracking: consume edit events, merge overlapping deltas, keep history.

A trajectory session owns one file. Every incoming event carries the full
pre- and post-edit text; the diff between them either starts a new active
delta, merges into the active delta when the regions overlap, or pushes the
active delta into history and takes its place. Merging re-diffs the union
region against the base text (the file as it was when the active delta
started), so the active delta always reads as one cohesive edit instead of a
pile of keystroke fragments.

History entries are recorded in the coordinates that were current when each
was finalized, which makes replaying them in order over the initial text
reproduce the final text.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .diff import (
    CodeSnapshot,
    DeltaScript,
    EMPTY_DELTA,
    LineRange,
    apply_diff,
    compute_diff,
    diff_lines,
    shift_delta,
    split_lines,
)

EditTrajectory = list[DeltaScript]


class TrajectoryError(Exception):
    """Base class for trajectory-layer errors."""


class StreamDiscontinuity(TrajectoryError):
    """An event's pre text does not match the session's current text."""


class NotOverlapping(TrajectoryError):
    """merge_deltas was called on deltas whose regions do not overlap."""


@dataclass(frozen=True)
class EditEvent:
    """One editing operation: the file before and after, with a timestamp."""

    pre: CodeSnapshot
    post: CodeSnapshot
    timestamp_ms: int = 0


@dataclass(frozen=True)
class HistoryWindow:
    """How many most-recent history entries are exposed to prompts/datasets."""

    max_edits: int = 3

    def __post_init__(self) -> None:
        if self.max_edits < 1:
            raise ValueError("max_edits must be >= 1")


def _effective(rng: LineRange) -> LineRange:
    # A zero-width range is the seam left by a pure insert/delete; widen it to
    # touch both neighbouring lines so line-by-line typing/deleting merges.
    if rng.is_empty:
        return LineRange(max(1, rng.start - 1), rng.start)
    return rng


def overlap(a: DeltaScript, b: DeltaScript, gap: int = 0) -> bool:
    """True when b's pre-range intersects a's post-range, or sits within ``gap`` lines of it."""
    if a.post_range is None or b.pre_range is None:
        return False
    r1 = _effective(a.post_range)
    r2 = _effective(b.pre_range)
    return r2.start <= r1.end + gap and r1.start <= r2.end + gap


def _map_mid_to_base(rng: LineRange, a: DeltaScript) -> LineRange:
    """Conservatively map a range in a's post coordinates back to its pre coordinates."""
    assert a.pre_range is not None and a.post_range is not None
    qs, qe = a.post_range.start, a.post_range.end
    ps, pe = a.pre_range.start, a.pre_range.end
    shift = a.shift

    def low(y: int) -> int:
        if y < qs:
            return y
        if y > qe:
            return y - shift
        return ps

    def high(y: int) -> int:
        if y < qs:
            return y
        if y > qe:
            return y - shift
        return pe

    return LineRange(low(rng.start), high(rng.end))


def merge_deltas(a: DeltaScript, b: DeltaScript, base_text: str, gap: int = 0) -> DeltaScript:
    """Fold b (computed against a's post state) into a, re-diffed against ``base_text``.

    The result applies to ``base_text`` exactly like applying a then b. Ranges
    may shrink below the union of the inputs when b reverts part of a; a full
    revert yields the empty delta.
    """
    if a.is_empty and b.is_empty:
        return EMPTY_DELTA
    if a.is_empty:
        return b
    if b.is_empty:
        return a
    if not overlap(a, b, gap=gap):
        raise NotOverlapping("deltas do not overlap; finalize the first instead of merging")

    mid = apply_diff(base_text, a)
    fin = apply_diff(mid, b)
    assert a.pre_range is not None and b.pre_range is not None

    hull = a.pre_range.hull(_map_mid_to_base(b.pre_range, a))
    base_lines = split_lines(base_text)
    fin_lines = split_lines(fin)
    lo = max(1, hull.start)
    hi = min(len(base_lines), hull.end)
    total_shift = a.shift + b.shift
    base_slice = base_lines[lo - 1 : hi]
    fin_slice = fin_lines[lo - 1 : hi + total_shift]
    return shift_delta(diff_lines(base_slice, fin_slice), lo - 1)


def windowed_history(history: EditTrajectory, window: HistoryWindow) -> EditTrajectory:
    """The last ``window.max_edits`` entries, oldest first."""
    return list(history[-window.max_edits :])


class TrajectoryState:
    """Single-file editing session state: active delta, finalized history, texts.

    One writer per session: ``ingest`` calls must be serialized by the caller.
    """

    def __init__(self, initial_text: str | None = None, merge_gap: int = 0):
        self.initial_text = initial_text
        self.base_text = initial_text
        self.current_text = initial_text
        self.active: DeltaScript | None = None
        self.history: EditTrajectory = []
        self.merge_gap = merge_gap

    def ingest(self, event: EditEvent) -> None:
        """Advance the state machine by one edit event.

        Empty diffs are dropped; an event whose pre text is not the session's
        current text raises StreamDiscontinuity.
        """
        if self.current_text is None:
            self.initial_text = self.base_text = self.current_text = event.pre.text
        if event.pre.text != self.current_text:
            raise StreamDiscontinuity("event pre text does not match the session's current text")
        delta = compute_diff(event.pre.text, event.post.text)
        if delta.is_empty:
            return
        if self.active is None:
            self.base_text = event.pre.text
            self.active = delta
        elif overlap(self.active, delta, gap=self.merge_gap):
            merged = merge_deltas(self.active, delta, self.base_text, gap=self.merge_gap)
            if merged.is_empty:
                # b undid a entirely; nothing left to track.
                self.active = None
                self.base_text = event.post.text
            else:
                self.active = merged
        else:
            self.history.append(self.active)
            self.base_text = event.pre.text
            self.active = delta
        self.current_text = event.post.text

    def finalize(self) -> EditTrajectory:
        """Flush the active delta (if any) into history and return the history."""
        if self.active is not None and not self.active.is_empty:
            self.history.append(self.active)
        self.active = None
        self.base_text = self.current_text
        return list(self.history)

    def history_with_active(self) -> EditTrajectory:
        """History plus the live active delta as the most-recent entry (no flush)."""
        entries = list(self.history)
        if self.active is not None and not self.active.is_empty:
            entries.append(self.active)
        return entries


def read_event_log(path: str | Path) -> list[EditEvent]:
    """Load an event-log file: one JSON object per line with ts/pre/post/cursor_line."""
    events: list[EditEvent] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                events.append(
                    EditEvent(
                        pre=CodeSnapshot(row["pre"]),
                        post=CodeSnapshot(row["post"], cursor_line=row.get("cursor_line")),
                        timestamp_ms=int(row.get("ts", 0)),
                    )
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise TrajectoryError(f"{path}:{line_no}: bad event row: {exc}") from exc
    return events


def write_event_log(events: list[EditEvent], path: str | Path) -> int:
    """Write events as JSONL (ts/pre/post/cursor_line); returns the row count."""
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(
                json.dumps(
                    {
                        "ts": ev.timestamp_ms,
                        "pre": ev.pre.text,
                        "post": ev.post.text,
                        "cursor_line": ev.post.cursor_line,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    return len(events)
