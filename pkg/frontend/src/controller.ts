/**
 * Editing-session controller: syncs debounced edits to the service, chains
 * location -> edit suggestions into a ghost overlay, and drives Tab/Escape.
 *
 * Navigation suggestions are auto-accepted when they arrive (a cursor jump is
 * non-destructive), then the edit suggestion for the target line is fetched
 * and shown as the ghost. One Tab press therefore applies one suggested edit,
 * which is what makes the chained scenario a Tab-Tab-Tab flow. After every
 * accepted edit the buffer is replaced by the server's text and verified
 * against the returned hash: the server owns the truth.
 */

import { ApiError, ServiceClient, SuggestionPayload } from "./api.js";
import { Debounced } from "./debounce.js";
import { GhostOverlay, editOverlay, jumpOverlay } from "./ghost.js";
import { sha256Hex } from "./hash.js";

export type ConnectionStatus = "connecting" | "ready" | "offline" | "error";

export interface ControllerSnapshot {
  buffer: string;
  cursorLine: number;
  ghost: GhostOverlay | null;
  status: ConnectionStatus;
  statusDetail: string;
  lastLatencyMs: number | null;
  overBudget: boolean;
  historyLen: number;
  sessionId: string | null;
}

export interface ControllerOptions {
  debounceMs?: number;
  retryMs?: number;
  log?: (msg: string) => void;
}

export class SessionController {
  private buffer: string;
  private lastSynced: string;
  private cursorLine = 1;
  private ghost: GhostOverlay | null = null;
  private pending: SuggestionPayload | null = null;
  private status: ConnectionStatus = "connecting";
  private statusDetail = "";
  private lastLatencyMs: number | null = null;
  private overBudget = false;
  private historyLen = 0;
  private sessionId: string | null = null;
  private generation = 0; // bumped on every local edit; stale suggestion responses are dropped
  private syncing: Promise<void> | null = null;
  private readonly debounce: Debounced;
  private readonly retryMs: number;
  private readonly log: (msg: string) => void;
  private readonly listeners = new Set<(snap: ControllerSnapshot) => void>();

  constructor(
    private readonly client: ServiceClient,
    initialText: string,
    options: ControllerOptions = {},
  ) {
    this.buffer = initialText;
    this.lastSynced = initialText;
    this.debounce = new Debounced(() => void this.sync(), options.debounceMs ?? 300);
    this.retryMs = options.retryMs ?? 2000;
    this.log = options.log ?? ((msg) => console.error(msg));
  }

  subscribe(listener: (snap: ControllerSnapshot) => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  snapshot(): ControllerSnapshot {
    return {
      buffer: this.buffer,
      cursorLine: this.cursorLine,
      ghost: this.ghost,
      status: this.status,
      statusDetail: this.statusDetail,
      lastLatencyMs: this.lastLatencyMs,
      overBudget: this.overBudget,
      historyLen: this.historyLen,
      sessionId: this.sessionId,
    };
  }

  private render(): void {
    const snap = this.snapshot();
    for (const listener of this.listeners) listener(snap);
  }

  private setStatus(status: ConnectionStatus, detail = ""): void {
    this.status = status;
    this.statusDetail = detail;
    this.render();
  }

  hasGhost(): boolean {
    return this.ghost !== null;
  }

  async start(): Promise<void> {
    try {
      const session = await this.client.createSession();
      this.sessionId = session.session_id;
      // Seed the server's copy of the file with a no-op event.
      await this.client.pushEvent(this.sessionId, {
        pre: this.buffer,
        post: this.buffer,
        cursor_line: this.cursorLine,
      });
      this.setStatus("ready");
    } catch (err) {
      this.setStatus("offline", String(err));
      setTimeout(() => void this.start(), this.retryMs);
    }
  }

  /** Called by the view on every buffer change; batches keystrokes via debounce. */
  onEdit(text: string, cursorLine: number): void {
    this.cursorLine = cursorLine;
    if (text === this.buffer) {
      this.render();
      return;
    }
    this.buffer = text;
    this.generation += 1;
    if (this.ghost !== null) {
      // Editing through a suggestion dismisses it immediately.
      this.clearGhost();
    }
    this.render();
    this.debounce.schedule();
  }

  private clearGhost(): void {
    this.ghost = null;
    this.pending = null;
  }

  private async sync(): Promise<void> {
    if (this.syncing) return this.syncing;
    this.syncing = this.doSync().finally(() => {
      this.syncing = null;
    });
    return this.syncing;
  }

  private async doSync(): Promise<void> {
    if (this.sessionId === null || this.buffer === this.lastSynced) return;
    const pre = this.lastSynced;
    const post = this.buffer;
    const generation = this.generation;
    try {
      const summary = await this.client.pushEvent(this.sessionId, {
        pre,
        post,
        cursor_line: this.cursorLine,
      });
      this.lastSynced = post;
      this.historyLen = summary.history_len;
      this.setStatus("ready");
      if (this.buffer !== this.lastSynced) {
        // More typing arrived while the request was in flight.
        this.debounce.schedule();
        return;
      }
      await this.requestLocation(generation);
    } catch (err) {
      if (err instanceof ApiError && err.code === "STREAM_DISCONTINUITY") {
        await this.resync("stream discontinuity");
      } else if (err instanceof ApiError && err.status === 0) {
        this.setStatus("offline", err.message);
        setTimeout(() => void this.sync(), this.retryMs);
      } else {
        this.setStatus("error", String(err));
      }
    }
  }

  private async requestLocation(generation: number): Promise<void> {
    if (this.sessionId === null) return;
    let suggestion: SuggestionPayload;
    try {
      suggestion = await this.client.suggestLocation(this.sessionId);
    } catch (err) {
      this.log(`location suggestion failed: ${String(err)}`);
      return;
    }
    if (generation !== this.generation) return; // superseded by newer typing
    this.noteLatency(suggestion);
    if (typeof suggestion.location !== "number") {
      this.clearGhost();
      this.render();
      return;
    }
    // Navigation is non-destructive: accept it right away and chain into the
    // edit suggestion so a single Tab applies the edit.
    try {
      const accepted = await this.client.accept(this.sessionId, suggestion.suggestion_id);
      this.cursorLine = accepted.jump_line ?? suggestion.location;
    } catch (err) {
      if (!(err instanceof ApiError && err.code === "STALE_SUGGESTION")) {
        this.log(`jump accept failed: ${String(err)}`);
      }
      return;
    }
    if (generation !== this.generation) return;
    this.ghost = jumpOverlay(suggestion.location);
    this.render();
    await this.requestEdit(suggestion.location, generation);
  }

  private async requestEdit(line: number, generation: number): Promise<void> {
    if (this.sessionId === null) return;
    let suggestion: SuggestionPayload;
    try {
      suggestion = await this.client.suggestEdit(this.sessionId, line);
    } catch (err) {
      this.log(`edit suggestion failed: ${String(err)}`);
      if (generation === this.generation) {
        this.clearGhost();
        this.render();
      }
      return;
    }
    if (generation !== this.generation) return;
    this.noteLatency(suggestion);
    const overlay = editOverlay(suggestion.diff, suggestion.window_start, this.log);
    if (overlay === null) {
      this.clearGhost();
    } else {
      this.ghost = overlay;
      this.pending = suggestion;
    }
    this.render();
  }

  private noteLatency(suggestion: SuggestionPayload): void {
    this.lastLatencyMs = suggestion.latency_ms;
    this.overBudget = suggestion.over_budget;
  }

  /** Tab: apply the pending edit suggestion. Returns false when Tab should indent instead. */
  async tabAccept(): Promise<boolean> {
    if (this.ghost === null) return false;
    if (this.pending === null) return true; // jump hint visible, edit still in flight
    if (this.sessionId === null) return true;
    const pending = this.pending;
    const generation = this.generation;
    try {
      const accepted = await this.client.accept(this.sessionId, pending.suggestion_id);
      if (accepted.applied && accepted.current_text !== undefined) {
        const localHash = await sha256Hex(accepted.current_text);
        if (localHash !== accepted.current_hash) {
          this.log("hash mismatch after accept; resyncing from server");
          await this.resync("hash mismatch");
          return true;
        }
        this.buffer = accepted.current_text;
        this.lastSynced = accepted.current_text;
        this.historyLen = accepted.history_len;
        this.generation += 1;
      }
      this.clearGhost();
      this.render();
      // The loop continues: ask where the next edit should go.
      await this.requestLocation(this.generation);
    } catch (err) {
      if (err instanceof ApiError && (err.code === "STALE_SUGGESTION" || err.code === "NO_PENDING")) {
        this.clearGhost();
        this.render();
      } else {
        this.setStatus("error", String(err));
      }
    }
    return true;
  }

  /** Escape: reject the pending suggestion and clear the ghost. */
  async escapeReject(): Promise<boolean> {
    if (this.pending === null || this.sessionId === null) {
      if (this.ghost !== null) {
        this.clearGhost();
        this.render();
        return true;
      }
      return false;
    }
    const pending = this.pending;
    this.clearGhost();
    this.render();
    try {
      await this.client.reject(this.sessionId, pending.suggestion_id);
    } catch (err) {
      this.log(`reject failed: ${String(err)}`);
    }
    return true;
  }

  /** Pull the server's state and adopt it wholesale (server authority). */
  async resync(reason: string): Promise<void> {
    if (this.sessionId === null) return;
    try {
      const state = await this.client.state(this.sessionId);
      if (state.current_text !== null) {
        this.buffer = state.current_text;
        this.lastSynced = state.current_text;
      }
      this.historyLen = state.history_len;
      this.generation += 1;
      this.clearGhost();
      this.setStatus("ready", `resynced (${reason})`);
    } catch (err) {
      this.setStatus("error", `resync failed: ${String(err)}`);
    }
  }

  /** Test/debug hook: run a pending debounced sync immediately. */
  flushSync(): Promise<void> {
    this.debounce.flush();
    return this.syncing ?? Promise.resolve();
  }
}
