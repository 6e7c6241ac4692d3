"""Scripted chat-completions HTTP server for demos and end-to-end tests.

Two table formats, both JSONL:

* keyed (default): ``{"prompt_sha256": ..., "response": ..., "delay_ms": 0}``:
  replies are looked up by the SHA-256 of system + NUL + user.
* sequential (``--sequential``): ``{"model": ..., "response": ...}``, where
  rows are served in file order, independently per model name, regardless of
  the prompt. This is what browser-driven demos use, since their prompts are
  not byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from collections import defaultdict
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel


class ChatMessage(BaseModel):
    role: str
    content: str


class ChatRequest(BaseModel):
    model: str = "default"
    messages: list[ChatMessage]
    temperature: float = 0.0


def _completion_body(text: str, model: str) -> dict:
    return {
        "id": "mock",
        "object": "chat.completion",
        "model": model,
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text},
                     "finish_reason": "stop"}],
    }


def create_mock_app(table_path: str | Path, sequential: bool = False) -> FastAPI:
    """Build the mock server app from a response-table file."""
    rows = []
    with open(table_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))

    app = FastAPI(title="nextedit scripted backend")
    lock = threading.Lock()

    if sequential:
        queues: dict[str, list[str]] = defaultdict(list)
        for row in rows:
            queues[row.get("model", "*")].append(row["response"])
        cursors: dict[str, int] = defaultdict(int)

        def answer(request: ChatRequest) -> str | None:
            with lock:
                for key in (request.model, "*"):
                    queue = queues.get(key)
                    if queue is not None and cursors[key] < len(queue):
                        text = queue[cursors[key]]
                        cursors[key] += 1
                        return text
            return None

    else:
        by_sha = {row["prompt_sha256"]: row for row in rows}

        def answer(request: ChatRequest) -> str | None:
            system = next((m.content for m in request.messages if m.role == "system"), "")
            user = next((m.content for m in request.messages if m.role == "user"), "")
            digest = hashlib.sha256()
            digest.update(system.encode("utf-8"))
            digest.update(b"\x00")
            digest.update(user.encode("utf-8"))
            row = by_sha.get(digest.hexdigest())
            if row is None:
                return None
            delay = float(row.get("delay_ms", 0))
            if delay:
                time.sleep(delay / 1000.0)
            return row["response"]

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "rows": len(rows), "sequential": sequential}

    @app.post("/v1/chat/completions")
    def completions(request: ChatRequest):
        text = answer(request)
        if text is None:
            return JSONResponse(
                status_code=404,
                content={"error": {"message": "no scripted response for this prompt"}},
            )
        return _completion_body(text, request.model)

    return app
