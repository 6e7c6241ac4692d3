"""Prompt construction, model-output parsing, and the chat-completion backend client.

Prompt layout (version ``PROMPT_VERSION``) is fixed: instructions, then the
edit history (oldest first, each entry one numbered-diff block), then the
current file with 1-based line numbers, then the cursor marker, and for edit
prompts the editable region between sentinel lines. The instructions plus
rendered history form the stable byte prefix of consecutive prompts in a
session; history rendering is append-only so server-side prefix caches keep
hitting until the history window slides.

Backends speak the ubiquitous chat-completions JSON protocol over HTTP, or
replay a recorded response table (keyed by prompt SHA-256, or sequentially
per model) for deterministic tests and demos.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Protocol

import httpx

from .diff import CodeSnapshot, split_lines
from .metrics import KEEP, Location

PROMPT_VERSION = "1"

HISTORY_HEADER = "EDIT HISTORY:"
HISTORY_EMPTY = "EDIT HISTORY: (none)"
REGION_START = "<<<REGION_START>>>"
REGION_END = "<<<REGION_END>>>"

LOCATION_SYSTEM = (
    "You are a code navigation assistant. You see a developer's recent edits and the "
    "current file. Predict the line where the next edit belongs.\n"
    "Reply with exactly one line: either 'LINE <n>' (a 1-based line number in the current "
    "file) or 'KEEP' if no move is warranted."
)

EDIT_SYSTEM = (
    "You are a code editing assistant. You see a developer's recent edits, the current "
    "file, and an editable region. Rewrite the region to carry the developer's changes "
    "forward.\n"
    "Reply with the complete rewritten region inside one fenced code block and nothing "
    "else. Return the region unchanged if no edit is warranted."
)

JUDGE_SYSTEM = (
    "You are a data-labeling judge. You see a developer's recent edit history and one "
    "candidate next edit. Decide whether the candidate is a logical, predictable "
    "continuation of the history, or an unrelated action.\n"
    "Reply 'RELEVANT' or 'IRRELEVANT' on the first line; a short rationale may follow."
)

_SYSTEM_BY_ROLE = {"location": LOCATION_SYSTEM, "edit": EDIT_SYSTEM, "judge": JUDGE_SYSTEM}


class ModelIOError(Exception):
    """Base class for prompt/backend errors."""


class ContextOverflow(ModelIOError):
    """The prompt exceeds the byte budget even with all history dropped."""


class WindowMismatch(ModelIOError):
    """The supplied editable window does not match the file text."""


class UnparseableOutput(ModelIOError):
    """Model output does not contain a location in the expected grammar."""


class EmptyOutput(ModelIOError):
    """Model output contains no edit text."""


class BackendError(ModelIOError):
    """The backend answered with a failure status."""

    def __init__(self, status: int, excerpt: str = ""):
        super().__init__(f"backend error {status}: {excerpt[:200]}")
        self.status = status
        self.excerpt = excerpt[:200]


class BackendTimeout(ModelIOError):
    """The backend did not answer within the configured timeout."""


@dataclass(frozen=True)
class PromptBundle:
    """One assembled request: system + user text, with the stable-prefix length in bytes."""

    system: str
    user: str
    role: Literal["location", "edit", "judge"]
    stable_prefix_len: int


@dataclass(frozen=True)
class PromptConfig:
    """Prompt assembly knobs; the byte budget bounds the whole prompt."""

    max_bytes: int = 24 * 1024


@dataclass
class ModelBackend:
    """Backend connection settings: a real HTTP endpoint or a scripted response table."""

    endpoint: str = ""
    model_name: str = "default"
    timeout_ms: int = 30_000
    auth_token: str | None = None
    mode: Literal["http", "scripted_mock"] = "http"
    completions_path: str = "/v1/chat/completions"
    mock_table: str | Path | None = None

    def __post_init__(self) -> None:
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be > 0")


@dataclass(frozen=True)
class CompletionResult:
    """Raw completion text plus the wall-clock time the backend call took."""

    text: str
    latency_ms: float


@dataclass(frozen=True)
class Suggestion:
    """A model proposal: a jump/keep location or a rewritten window."""

    kind: Literal["location", "edit"]
    raw: str
    latency_ms: float
    suggestion_id: str = field(default_factory=lambda: uuid.uuid4().hex[:12])
    location: Location | None = None
    edit_window: str | None = None
    window_start: int | None = None
    diff: str | None = None


def _render_history_block(history: list[str]) -> str:
    if not history:
        return HISTORY_EMPTY
    parts = [HISTORY_HEADER]
    for i, entry in enumerate(history, start=1):
        parts.append(f"<<< EDIT {i} >>>")
        parts.append(entry)
    return "\n".join(parts)


def _render_file_block(current: CodeSnapshot) -> str:
    lines = split_lines(current.text)
    header = f"CURRENT FILE ({current.language_tag or 'text'}):"
    numbered = [f"{n}| {line}" for n, line in enumerate(lines, start=1)]
    cursor = f"CURSOR LINE: {current.cursor_line}" if current.cursor_line else "CURSOR LINE: (none)"
    return "\n".join([header, *numbered, "", cursor])


def _assemble(
    role: Literal["location", "edit", "judge"],
    current: CodeSnapshot,
    history: list[str],
    cfg: PromptConfig,
    tail: str = "",
) -> PromptBundle:
    system = _SYSTEM_BY_ROLE[role]
    entries = list(history)
    while True:
        history_block = _render_history_block(entries)
        user = history_block + "\n\n" + _render_file_block(current)
        if tail:
            user += "\n\n" + tail
        total = len(system.encode("utf-8")) + len(user.encode("utf-8"))
        if total <= cfg.max_bytes:
            stable = len(system.encode("utf-8")) + len((history_block + "\n\n").encode("utf-8"))
            return PromptBundle(system=system, user=user, role=role, stable_prefix_len=stable)
        if not entries:
            raise ContextOverflow(
                f"prompt is {total} bytes with no history; budget is {cfg.max_bytes}"
            )
        entries.pop(0)  # drop the oldest history entry first, never the file


def build_location_prompt(
    current: CodeSnapshot, history: list[str], cfg: PromptConfig | None = None
) -> PromptBundle:
    """Prompt asking for the next edit location. ``history`` must already be windowed."""
    return _assemble("location", current, history, cfg or PromptConfig())


def build_edit_prompt(
    current: CodeSnapshot,
    history: list[str],
    window_start: int,
    window_pre: str,
    cfg: PromptConfig | None = None,
) -> PromptBundle:
    """Prompt asking for a rewrite of the editable window at ``window_start``."""
    lines = split_lines(current.text)
    window_lines = window_pre.split("\n") if window_pre else []
    window_end = window_start + len(window_lines) - 1
    actual = "\n".join(lines[window_start - 1 : window_start - 1 + len(window_lines)])
    if window_start < 1 or window_end > len(lines) or actual != window_pre:
        raise WindowMismatch(
            f"window at lines {window_start}..{window_end} does not match the file"
        )
    tail = "\n".join(
        [
            f"EDITABLE REGION (lines {window_start}-{window_end}):",
            REGION_START,
            window_pre,
            REGION_END,
        ]
    )
    return _assemble("edit", current, history, cfg or PromptConfig(), tail=tail)


def parse_location_output(raw: str) -> Location:
    """First line of the form 'LINE <n>' or 'KEEP' (case-insensitive); UnparseableOutput otherwise."""
    for line in raw.split("\n"):
        word = line.strip()
        if not word:
            continue
        upper = word.upper()
        if upper == "KEEP":
            return KEEP
        if upper.startswith("LINE"):
            rest = word[4:].strip()
            if rest.isdigit():
                return int(rest)
    raise UnparseableOutput(f"no location in output: {raw[:120]!r}")


def parse_edit_output(raw: str, window_pre: str = "") -> str:
    """Extract the rewritten window: first fenced block, else region sentinels, else the whole output."""
    text = raw
    fence = text.find("```")
    if fence != -1:
        body_start = text.find("\n", fence)
        if body_start != -1:
            close = text.find("```", body_start)
            if close != -1:
                text = text[body_start + 1 : close]
                if text.endswith("\n"):
                    text = text[:-1]
            else:
                text = text[body_start + 1 :]
        else:
            text = ""
    elif REGION_START in text and REGION_END in text:
        start = text.index(REGION_START) + len(REGION_START)
        end = text.index(REGION_END, start)
        text = text[start:end].strip("\n")
    else:
        text = text.strip("\n")
    if text == "":
        raise EmptyOutput("model returned no edit text")
    return text


def prompt_sha(bundle: PromptBundle) -> str:
    """Key used by scripted response tables: SHA-256 over system + NUL + user."""
    digest = hashlib.sha256()
    digest.update(bundle.system.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(bundle.user.encode("utf-8"))
    return digest.hexdigest()


class CompletionBackend(Protocol):
    """Anything that can answer a prompt; all service/eval code talks to this."""

    def complete(self, bundle: PromptBundle) -> CompletionResult: ...


class HttpBackend:
    """Chat-completions client: single non-streaming request, greedy decoding, one transport retry."""

    def __init__(self, config: ModelBackend, transport: httpx.BaseTransport | None = None):
        self.config = config
        self._client = httpx.Client(timeout=config.timeout_ms / 1000.0, transport=transport)

    def complete(self, bundle: PromptBundle) -> CompletionResult:
        cfg = self.config
        url = cfg.endpoint.rstrip("/") + cfg.completions_path
        headers = {}
        if cfg.auth_token:
            headers["Authorization"] = f"Bearer {cfg.auth_token}"
        payload = {
            "model": cfg.model_name,
            "messages": [
                {"role": "system", "content": bundle.system},
                {"role": "user", "content": bundle.user},
            ],
            "temperature": 0,
        }
        started = time.perf_counter()
        last_exc: Exception | None = None
        for attempt in range(2):
            try:
                response = self._client.post(url, json=payload, headers=headers)
            except httpx.TimeoutException as exc:
                raise BackendTimeout(f"no answer within {cfg.timeout_ms} ms: {exc}") from exc
            except httpx.TransportError as exc:
                last_exc = exc
                continue  # one retry on transport failure
            if response.status_code != 200:
                raise BackendError(response.status_code, response.text)
            latency_ms = (time.perf_counter() - started) * 1000.0
            try:
                text = response.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, ValueError) as exc:
                raise BackendError(200, f"malformed completion body: {exc}") from exc
            return CompletionResult(text=text, latency_ms=latency_ms)
        raise BackendError(0, f"transport failure after retry: {last_exc}")

    def close(self) -> None:
        self._client.close()


class ScriptedBackend:
    """Replays a recorded response table keyed by prompt SHA-256."""

    def __init__(self, entries: list[dict]):
        self._by_sha: dict[str, dict] = {}
        for entry in entries:
            self._by_sha[entry["prompt_sha256"]] = entry

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        return cls(load_mock_table(path))

    def complete(self, bundle: PromptBundle) -> CompletionResult:
        key = prompt_sha(bundle)
        entry = self._by_sha.get(key)
        if entry is None:
            raise BackendError(404, f"prompt {key[:12]} not in scripted table")
        delay = float(entry.get("delay_ms", 0))
        if delay:
            time.sleep(delay / 1000.0)
        return CompletionResult(text=entry["response"], latency_ms=delay)


class SequenceBackend:
    """Serves scripted responses in order regardless of prompt; for loop-style demos."""

    def __init__(self, responses: list[str]):
        self._responses = list(responses)
        self._next = 0
        self._lock = threading.Lock()

    def complete(self, bundle: PromptBundle) -> CompletionResult:
        with self._lock:
            if self._next >= len(self._responses):
                raise BackendError(410, "scripted sequence exhausted")
            text = self._responses[self._next]
            self._next += 1
        return CompletionResult(text=text, latency_ms=0.0)


def load_mock_table(path: str | Path) -> list[dict]:
    """Load a scripted response table: JSONL of {prompt_sha256, response, delay_ms}."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                entries.append(json.loads(line))
    return entries


def write_mock_table(entries: list[dict], path: str | Path) -> int:
    """Write a scripted response table as JSONL; returns the row count."""
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry, ensure_ascii=False, sort_keys=True) + "\n")
    return len(entries)


def make_backend(config: ModelBackend) -> CompletionBackend:
    """Build the concrete backend for a ModelBackend config record."""
    if config.mode == "scripted_mock":
        if config.mock_table is None:
            raise ValueError("scripted_mock mode requires mock_table")
        return ScriptedBackend.from_file(config.mock_table)
    if not config.endpoint:
        raise ValueError("http mode requires an endpoint URL")
    return HttpBackend(config)


def complete(backend: ModelBackend | CompletionBackend, bundle: PromptBundle) -> CompletionResult:
    """Answer a prompt through a backend config record or an already-built backend."""
    if isinstance(backend, ModelBackend):
        backend = make_backend(backend)
    return backend.complete(bundle)
