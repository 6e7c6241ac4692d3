"""Line-level diff engine and the numbered diff text format.

The unit of change everywhere in this package is a delta: one edit script
covering a contiguous span of a file, carrying per-line hunks plus the pre-
and post-edit region texts. Deltas are rendered to (and parsed from) the
numbered diff format, one row per line::

    1-| def Hello()
    1+| def GoodBye()
    2 |   print("Say")

Deleted and unchanged rows carry pre-edit line numbers, inserted rows carry
post-edit line numbers. Deltas are dense: every line between the first and
last change appears as a row (changed or context), which is what lets the
parser rebuild ranges and region texts from the rows alone. There is never
any context outside the changed span.

Files are compared at line granularity with ``'\n'`` as the separator; a
trailing newline on the last line does not count as an extra line.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

HunkKind = Literal["insert", "delete", "context"]

INSERT: HunkKind = "insert"
DELETE: HunkKind = "delete"
CONTEXT: HunkKind = "context"

_MARKERS = {DELETE: "-", INSERT: "+", CONTEXT: " "}
_KINDS_BY_MARKER = {v: k for k, v in _MARKERS.items()}


class DiffError(Exception):
    """Base class for diff-layer errors."""


class RegionMismatch(DiffError):
    """The delta's recorded pre-region does not match the target text."""


class FormatError(DiffError):
    """A numbered-diff row is malformed."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class NumberingError(DiffError):
    """Numbered-diff rows violate line-numbering invariants."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def split_lines(text: str) -> list[str]:
    """Split file text into lines; '' has zero lines, a final '\\n' is not an extra line."""
    if not text:
        return []
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    return lines


@dataclass(frozen=True)
class LineRange:
    """Inclusive 1-based line range; end == start - 1 encodes an empty range anchored at start."""

    start: int
    end: int

    @classmethod
    def empty_at(cls, pos: int) -> "LineRange":
        return cls(pos, pos - 1)

    @property
    def is_empty(self) -> bool:
        return self.end < self.start

    @property
    def length(self) -> int:
        return max(0, self.end - self.start + 1)

    def hull(self, other: "LineRange") -> "LineRange":
        return LineRange(min(self.start, other.start), max(self.end, other.end))


@dataclass(frozen=True)
class LineHunk:
    """One row of a delta: an inserted, deleted, or unchanged line.

    ``pre_line`` is set for delete/context rows, ``post_line`` for
    insert/context rows; both are 1-based.
    """

    kind: HunkKind
    content: str
    pre_line: int | None = None
    post_line: int | None = None


@dataclass(frozen=True)
class CodeSnapshot:
    """Full text of one file plus optional cursor line and language tag."""

    text: str
    cursor_line: int | None = None
    language_tag: str = ""

    def __post_init__(self) -> None:
        if self.cursor_line is not None and not 1 <= self.cursor_line <= self.line_count:
            raise ValueError(
                f"cursor_line {self.cursor_line} outside 1..{self.line_count}"
            )

    @property
    def line_count(self) -> int:
        return max(1, len(split_lines(self.text)))


@dataclass(frozen=True)
class DeltaScript:
    """One contiguous edit: hunks plus the pre/post ranges and region texts.

    For a delta produced against a single file state, ``pre_range.start ==
    post_range.start`` (the first divergence has the same coordinate on both
    sides); an empty range means a pure insertion or deletion anchored at
    ``start``. The empty delta (no change at all) has ``None`` ranges.
    """

    hunks: tuple[LineHunk, ...]
    pre_range: LineRange | None
    post_range: LineRange | None
    pre_region: str
    post_region: str

    @property
    def is_empty(self) -> bool:
        return not self.hunks

    @property
    def shift(self) -> int:
        """Line-count change this delta applies to the file."""
        if self.pre_range is None or self.post_range is None:
            return 0
        return self.post_range.length - self.pre_range.length


EMPTY_DELTA = DeltaScript(hunks=(), pre_range=None, post_range=None, pre_region="", post_region="")


def _strip_common_ends(a: list[str], b: list[str]) -> tuple[int, int]:
    """Return (prefix_len, suffix_len) of common ends that never overlap."""
    n, m = len(a), len(b)
    prefix = 0
    limit = min(n, m)
    while prefix < limit and a[prefix] == b[prefix]:
        prefix += 1
    suffix = 0
    limit -= prefix
    while suffix < limit and a[n - 1 - suffix] == b[m - 1 - suffix]:
        suffix += 1
    return prefix, suffix


def _myers_matches(a: list[str], b: list[str]) -> list[tuple[int, int]]:
    """Greedy Myers O(ND): 0-based index pairs (i, j) of a longest common subsequence."""
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return []
    max_d = n + m
    v: dict[int, int] = {1: 0}
    trace: list[dict[int, int]] = []
    for d in range(max_d + 1):
        trace.append(dict(v))
        for k in range(-d, d + 1, 2):
            if k == -d or (k != d and v.get(k - 1, 0) < v.get(k + 1, 0)):
                x = v.get(k + 1, 0)
            else:
                x = v.get(k - 1, 0) + 1
            y = x - k
            while x < n and y < m and a[x] == b[y]:
                x += 1
                y += 1
            v[k] = x
            if x >= n and y >= m:
                return _backtrack_matches(a, b, trace, d)
    raise AssertionError("unreachable: Myers search exhausted")


def _backtrack_matches(
    a: list[str], b: list[str], trace: list[dict[int, int]], d_final: int
) -> list[tuple[int, int]]:
    matches: list[tuple[int, int]] = []
    x, y = len(a), len(b)
    for d in range(d_final, -1, -1):
        v = trace[d]
        k = x - y
        if k == -d or (k != d and v.get(k - 1, 0) < v.get(k + 1, 0)):
            prev_k = k + 1
        else:
            prev_k = k - 1
        prev_x = v.get(prev_k, 0)
        prev_y = prev_x - prev_k
        while x > prev_x and y > prev_y:
            matches.append((x - 1, y - 1))
            x -= 1
            y -= 1
        if d > 0:
            x, y = prev_x, prev_y
    matches.reverse()
    return matches


def compute_diff(pre: str, post: str) -> DeltaScript:
    """Minimal line-level edit script from ``pre`` to ``post``.

    Within each change run deletions come before insertions; unchanged lines
    interior to the changed span are kept as context rows; identical inputs
    yield the empty delta.
    """
    return diff_lines(split_lines(pre), split_lines(post))


def diff_lines(a: list[str], b: list[str]) -> DeltaScript:
    """Line-list core of :func:`compute_diff`.

    Takes explicit line lists so region slices (whose trailing empty lines are
    significant) never pass through trailing-newline normalization.
    """
    prefix, suffix = _strip_common_ends(a, b)
    core_a = a[prefix : len(a) - suffix]
    core_b = b[prefix : len(b) - suffix]
    if not core_a and not core_b:
        return EMPTY_DELTA

    matches = _myers_matches(core_a, core_b)
    hunks: list[LineHunk] = []
    i = j = 0
    for mi, mj in matches + [(len(core_a), len(core_b))]:
        while i < mi:
            hunks.append(LineHunk(DELETE, core_a[i], pre_line=prefix + i + 1))
            i += 1
        while j < mj:
            hunks.append(LineHunk(INSERT, core_b[j], post_line=prefix + j + 1))
            j += 1
        if mi < len(core_a):
            hunks.append(
                LineHunk(CONTEXT, core_a[mi], pre_line=prefix + mi + 1, post_line=prefix + mj + 1)
            )
            i += 1
            j += 1

    # Trim exterior context: the span starts at the first change and ends at the last.
    first = next(idx for idx, h in enumerate(hunks) if h.kind != CONTEXT)
    last = len(hunks) - 1 - next(idx for idx, h in enumerate(reversed(hunks)) if h.kind != CONTEXT)
    hunks = hunks[first : last + 1]

    pre_lines = [h.pre_line for h in hunks if h.pre_line is not None]
    post_lines = [h.post_line for h in hunks if h.post_line is not None]
    anchor = hunks[0].pre_line or hunks[0].post_line
    assert anchor is not None
    pre_range = LineRange(pre_lines[0], pre_lines[-1]) if pre_lines else LineRange.empty_at(anchor)
    post_range = (
        LineRange(post_lines[0], post_lines[-1]) if post_lines else LineRange.empty_at(anchor)
    )
    pre_region = "\n".join(a[pre_range.start - 1 : pre_range.end])
    post_region = "\n".join(b[post_range.start - 1 : post_range.end])
    return DeltaScript(tuple(hunks), pre_range, post_range, pre_region, post_region)


def shift_delta(delta: DeltaScript, offset: int) -> DeltaScript:
    """Re-anchor a delta by adding ``offset`` to every line number on both sides."""
    if delta.is_empty or offset == 0:
        return delta
    assert delta.pre_range is not None and delta.post_range is not None
    hunks = tuple(
        LineHunk(
            h.kind,
            h.content,
            pre_line=h.pre_line + offset if h.pre_line is not None else None,
            post_line=h.post_line + offset if h.post_line is not None else None,
        )
        for h in delta.hunks
    )
    return DeltaScript(
        hunks,
        LineRange(delta.pre_range.start + offset, delta.pre_range.end + offset),
        LineRange(delta.post_range.start + offset, delta.post_range.end + offset),
        delta.pre_region,
        delta.post_region,
    )


def region_split(text: str) -> list[str]:
    """Lines of a region/window text: plain split, '' means zero lines."""
    return text.split("\n") if text else []


def region_lines(region: str, rng: LineRange | None) -> list[str]:
    """Lines of a region text, using the range to disambiguate '' (zero lines vs one empty line)."""
    if rng is None or rng.is_empty:
        return []
    lines = region.split("\n")
    if len(lines) != rng.length:
        raise RegionMismatch(
            f"region text has {len(lines)} lines but range {rng.start}..{rng.end} "
            f"expects {rng.length}"
        )
    return lines


def apply_diff(pre: str, delta: DeltaScript) -> str:
    """Apply ``delta`` to ``pre``, verifying the recorded pre-region first.

    Raises RegionMismatch when ``pre`` does not contain ``delta.pre_region``
    at ``delta.pre_range``.
    """
    if delta.is_empty:
        return pre
    assert delta.pre_range is not None and delta.post_range is not None
    lines = split_lines(pre)
    rng = delta.pre_range
    if rng.start < 1 or rng.end > len(lines) or rng.start > len(lines) + 1:
        raise RegionMismatch(
            f"pre range {rng.start}..{rng.end} out of bounds for a {len(lines)}-line file"
        )
    actual = "\n".join(lines[rng.start - 1 : rng.end])
    if actual != delta.pre_region:
        raise RegionMismatch(f"text at lines {rng.start}..{rng.end} does not match the delta")
    new_lines = lines[: rng.start - 1] + region_lines(delta.post_region, delta.post_range) + lines[rng.end :]
    return "\n".join(new_lines)


def render_numbered_diff(delta: DeltaScript) -> str:
    """Render a delta as numbered diff rows (``{n}{-+ }| {content}``), '\\n'-joined, no trailing newline."""
    rows = []
    for h in delta.hunks:
        n = h.pre_line if h.kind in (DELETE, CONTEXT) else h.post_line
        rows.append(f"{n}{_MARKERS[h.kind]}| {h.content}")
    return "\n".join(rows)


def parse_numbered_diff(text: str) -> DeltaScript:
    """Parse numbered diff rows back into a dense DeltaScript.

    Inverse of :func:`render_numbered_diff` for every delta this package
    produces. Blank lines are skipped; a bare ``N{m}|`` row is accepted as
    empty content. Raises FormatError on a malformed row and NumberingError
    when row numbers are non-monotonic or leave gaps in the covered span.
    """
    hunks: list[LineHunk] = []
    p = q = None  # next expected pre/post line during the walk
    for line_no, raw in enumerate(text.split("\n") if text else [], start=1):
        if not raw.strip():
            continue
        head, sep, content = raw.partition("| ")
        if not sep:
            if raw.endswith("|"):
                head, content = raw[:-1], ""
            else:
                raise FormatError(line_no, f"row does not match 'N[-+ ]| content': {raw!r}")
        if len(head) < 2 or head[-1] not in _KINDS_BY_MARKER or not head[:-1].isdigit():
            raise FormatError(line_no, f"row does not match 'N[-+ ]| content': {raw!r}")
        n = int(head[:-1])
        kind = _KINDS_BY_MARKER[head[-1]]
        if n < 1:
            raise NumberingError(line_no, "line numbers are 1-based")
        if p is None:
            p = q = n
        if kind == DELETE:
            if n != p:
                raise NumberingError(line_no, f"expected pre line {p}, got {n}")
            hunks.append(LineHunk(DELETE, content, pre_line=n))
            p += 1
        elif kind == INSERT:
            if n != q:
                raise NumberingError(line_no, f"expected post line {q}, got {n}")
            hunks.append(LineHunk(INSERT, content, post_line=n))
            q += 1
        else:
            if n != p:
                raise NumberingError(line_no, f"expected pre line {p}, got {n}")
            hunks.append(LineHunk(CONTEXT, content, pre_line=n, post_line=q))
            p += 1
            q += 1
    if not hunks:
        return EMPTY_DELTA

    pre_rows = [h for h in hunks if h.pre_line is not None]
    post_rows = [h for h in hunks if h.post_line is not None]
    anchor = hunks[0].pre_line or hunks[0].post_line
    assert anchor is not None
    pre_range = (
        LineRange(pre_rows[0].pre_line, pre_rows[-1].pre_line)  # type: ignore[arg-type]
        if pre_rows
        else LineRange.empty_at(anchor)
    )
    post_range = (
        LineRange(post_rows[0].post_line, post_rows[-1].post_line)  # type: ignore[arg-type]
        if post_rows
        else LineRange.empty_at(anchor)
    )
    pre_region = "\n".join(h.content for h in pre_rows)
    post_region = "\n".join(h.content for h in post_rows)
    return DeltaScript(tuple(hunks), pre_range, post_range, pre_region, post_region)
