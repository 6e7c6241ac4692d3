/** Typed client for the suggestion service HTTP API. */

export interface SuggestionPayload {
  suggestion_id: string;
  kind: "location" | "edit";
  location: number | "keep" | null;
  edit_window: string | null;
  window_start: number | null;
  window_end?: number;
  diff: string | null;
  raw: string;
  latency_ms: number;
  backend_ms: number;
  local_ms: number;
  over_budget: boolean;
}

export interface AcceptResponse {
  applied: boolean;
  kind: "location" | "edit";
  jump_line?: number | null;
  current_hash: string;
  current_text?: string;
  history_len: number;
}

export interface EventSummary {
  history_len: number;
  active_present: boolean;
  current_hash: string;
}

export interface SessionState {
  session_id: string;
  current_text: string | null;
  current_hash: string;
  history_len: number;
  active_present: boolean;
  pending_id: string | null;
  cursor_line: number | null;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface ServiceClient {
  createSession(): Promise<{ session_id: string }>;
  pushEvent(sid: string, body: { pre: string; post: string; cursor_line?: number }): Promise<EventSummary>;
  suggestLocation(sid: string): Promise<SuggestionPayload>;
  suggestEdit(sid: string, line: number): Promise<SuggestionPayload>;
  accept(sid: string, suggestionId: string): Promise<AcceptResponse>;
  reject(sid: string, suggestionId: string): Promise<{ ok: boolean }>;
  state(sid: string): Promise<SessionState>;
}

export class HttpServiceClient implements ServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, {
        method,
        headers: body === undefined ? undefined : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, "NETWORK", String(err));
    }
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      throw new ApiError(response.status, payload.code ?? "ERROR", payload.message ?? response.statusText);
    }
    return payload as T;
  }

  createSession(): Promise<{ session_id: string }> {
    return this.call("POST", "/v1/sessions", {});
  }

  pushEvent(sid: string, body: { pre: string; post: string; cursor_line?: number }): Promise<EventSummary> {
    return this.call("POST", `/v1/sessions/${sid}/events`, body);
  }

  suggestLocation(sid: string): Promise<SuggestionPayload> {
    return this.call("POST", `/v1/sessions/${sid}/suggest/location`);
  }

  suggestEdit(sid: string, line: number): Promise<SuggestionPayload> {
    return this.call("POST", `/v1/sessions/${sid}/suggest/edit`, { line });
  }

  accept(sid: string, suggestionId: string): Promise<AcceptResponse> {
    return this.call("POST", `/v1/sessions/${sid}/accept`, { suggestion_id: suggestionId });
  }

  reject(sid: string, suggestionId: string): Promise<{ ok: boolean }> {
    return this.call("POST", `/v1/sessions/${sid}/reject`, { suggestion_id: suggestionId });
  }

  state(sid: string): Promise<SessionState> {
    return this.call("GET", `/v1/sessions/${sid}/state`);
  }
}
