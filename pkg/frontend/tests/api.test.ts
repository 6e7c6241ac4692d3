import { describe, expect, test } from "vitest";

import { ApiError, HttpServiceClient } from "../src/api.js";

function fakeFetch(status: number, body: unknown) {
  const calls: Array<{ url: string; init?: RequestInit }> = [];
  const fetchFn = async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  };
  return { fetchFn, calls };
}

describe("http client", () => {
  test("posts JSON and returns the payload", async () => {
    const { fetchFn, calls } = fakeFetch(200, { session_id: "s1" });
    const client = new HttpServiceClient("http://svc", fetchFn);
    const session = await client.createSession();
    expect(session.session_id).toBe("s1");
    expect(calls[0]?.url).toBe("http://svc/v1/sessions");
    expect(calls[0]?.init?.method).toBe("POST");
  });

  test("service errors become ApiError with the wire code", async () => {
    const { fetchFn } = fakeFetch(409, { code: "STREAM_DISCONTINUITY", message: "pre mismatch" });
    const client = new HttpServiceClient("http://svc", fetchFn);
    await expect(client.pushEvent("s1", { pre: "a", post: "b" })).rejects.toMatchObject({
      status: 409,
      code: "STREAM_DISCONTINUITY",
    });
  });

  test("network failures become status-0 ApiError", async () => {
    const client = new HttpServiceClient("http://svc", async () => {
      throw new TypeError("fetch failed");
    });
    try {
      await client.state("s1");
      expect.unreachable();
    } catch (err) {
      expect(err).toBeInstanceOf(ApiError);
      expect((err as ApiError).status).toBe(0);
    }
  });

  test("suggest edit sends the line number", async () => {
    const { fetchFn, calls } = fakeFetch(200, { suggestion_id: "x", kind: "edit" });
    const client = new HttpServiceClient("http://svc", fetchFn);
    await client.suggestEdit("s1", 24);
    expect(JSON.parse(String(calls[0]?.init?.body))).toEqual({ line: 24 });
  });
});
