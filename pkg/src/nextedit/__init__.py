"""Edit-trajectory toolkit: incremental line diffs, trajectory tracking, datasets,
metrics, and a stateful next-edit suggestion service."""

from .diff import (
    CodeSnapshot,
    DeltaScript,
    LineHunk,
    LineRange,
    apply_diff,
    compute_diff,
    parse_numbered_diff,
    render_numbered_diff,
)
from .metrics import KEEP, edit_similarity, reward_edit, reward_location
from .trajectory import EditEvent, HistoryWindow, TrajectoryState, merge_deltas, overlap, windowed_history

__all__ = [
    "CodeSnapshot",
    "DeltaScript",
    "EditEvent",
    "HistoryWindow",
    "KEEP",
    "LineHunk",
    "LineRange",
    "TrajectoryState",
    "apply_diff",
    "compute_diff",
    "edit_similarity",
    "merge_deltas",
    "overlap",
    "parse_numbered_diff",
    "render_numbered_diff",
    "reward_edit",
    "reward_location",
    "windowed_history",
]

__version__ = "0.1.0"
