/** DOM bindings: textarea editor, ghost overlay panel, status bar. */

import { SessionController, ControllerSnapshot } from "./controller.js";

export interface ViewElements {
  editor: HTMLTextAreaElement;
  overlay: HTMLElement;
  statusBar: HTMLElement;
  jumpMarker: HTMLElement;
}

function cursorLineOf(editor: HTMLTextAreaElement): number {
  const upToCursor = editor.value.slice(0, editor.selectionStart ?? 0);
  return upToCursor.split("\n").length;
}

function renderOverlay(snap: ControllerSnapshot, overlay: HTMLElement, jumpMarker: HTMLElement): void {
  overlay.textContent = "";
  jumpMarker.hidden = true;
  const ghost = snap.ghost;
  if (ghost === null) return;
  if (ghost.type === "jump") {
    jumpMarker.hidden = false;
    jumpMarker.textContent = `→ line ${ghost.line}`;
    return;
  }
  if (ghost.type === "no-change") {
    const badge = document.createElement("div");
    badge.className = "ghost-badge";
    badge.textContent = "no change suggested (Tab to dismiss)";
    overlay.appendChild(badge);
    return;
  }
  const title = document.createElement("div");
  title.className = "ghost-title";
  title.textContent = `suggested edit (Tab to accept, Esc to dismiss)`;
  overlay.appendChild(title);
  for (const row of ghost.rows) {
    const div = document.createElement("div");
    div.className =
      row.marker === "-" ? "ghost-row strike" : row.marker === "+" ? "ghost-row insert" : "ghost-row context";
    div.textContent = `${row.line}${row.marker}| ${row.content}`;
    overlay.appendChild(div);
  }
}

function renderStatus(snap: ControllerSnapshot, statusBar: HTMLElement): void {
  const latency =
    snap.lastLatencyMs === null
      ? ""
      : ` · ${snap.lastLatencyMs.toFixed(0)} ms${snap.overBudget ? " (over budget)" : ""}`;
  const detail = snap.statusDetail ? ` (${snap.statusDetail})` : "";
  statusBar.textContent = `${snap.status}${detail} · history ${snap.historyLen}${latency} · line ${snap.cursorLine}`;
  statusBar.dataset.status = snap.status;
}

export function bindView(controller: SessionController, el: ViewElements): void {
  controller.subscribe((snap) => {
    if (el.editor.value !== snap.buffer) {
      const pos = el.editor.selectionStart;
      el.editor.value = snap.buffer;
      el.editor.selectionStart = el.editor.selectionEnd = Math.min(pos ?? 0, snap.buffer.length);
    }
    renderOverlay(snap, el.overlay, el.jumpMarker);
    renderStatus(snap, el.statusBar);
  });

  el.editor.addEventListener("input", () => {
    controller.onEdit(el.editor.value, cursorLineOf(el.editor));
  });
  el.editor.addEventListener("keyup", () => {
    controller.onEdit(el.editor.value, cursorLineOf(el.editor));
  });
  el.editor.addEventListener("keydown", (event) => {
    if (event.key === "Tab") {
      if (controller.hasGhost()) {
        event.preventDefault();
        void controller.tabAccept();
      } else {
        // Normal indentation when no ghost is showing.
        event.preventDefault();
        const start = el.editor.selectionStart ?? 0;
        const end = el.editor.selectionEnd ?? start;
        el.editor.setRangeText("  ", start, end, "end");
        controller.onEdit(el.editor.value, cursorLineOf(el.editor));
      }
    } else if (event.key === "Escape") {
      void controller.escapeReject();
    }
  });
}
