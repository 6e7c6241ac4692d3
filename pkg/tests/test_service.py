import statistics
import time

import pytest
from fastapi.testclient import TestClient

from nextedit.diff import CodeSnapshot, compute_diff
from nextedit.model_io import BackendError, CompletionResult, SequenceBackend
from nextedit.service import (
    ServiceConfig,
    SuggestionService,
    create_app,
    text_hash,
)
from scenario import ROUND_TARGETS, STATES, round_edit_response


class EchoKeepBackend:
    def complete(self, bundle):
        return CompletionResult(text="KEEP", latency_ms=0.0)


class FailingBackend:
    def complete(self, bundle):
        raise BackendError(502, "model down")


def make_service(location=None, edit=None, **cfg_overrides) -> SuggestionService:
    config = ServiceConfig(**cfg_overrides)
    return SuggestionService(config, location or EchoKeepBackend(), edit or EchoKeepBackend())


def make_client(service: SuggestionService) -> TestClient:
    return TestClient(create_app(service), raise_server_exceptions=False)


def _session(client, **overrides) -> str:
    response = client.post("/v1/sessions", json=overrides or None)
    assert response.status_code == 200, response.text
    return response.json()["session_id"]


# --- sessions ---

def test_create_session_defaults():
    client = make_client(make_service())
    response = client.post("/v1/sessions", json={})
    body = response.json()
    assert body["history_window"] == 3
    assert body["latency_budget_ms"] == 450.0


def test_create_session_with_k_override():
    client = make_client(make_service())
    response = client.post("/v1/sessions", json={"history_window": 5})
    assert response.json()["history_window"] == 5


def test_capacity_exceeded():
    client = make_client(make_service(max_sessions=2))
    _session(client)
    _session(client)
    response = client.post("/v1/sessions", json={})
    assert response.status_code == 503
    assert response.json()["code"] == "CAPACITY_EXCEEDED"


def test_unknown_session_404():
    client = make_client(make_service())
    response = client.get("/v1/sessions/nope/state")
    assert response.status_code == 404
    assert response.json()["code"] == "UNKNOWN_SESSION"


def test_session_ttl_eviction():
    service = make_service(session_ttl_s=0.05)
    client = make_client(service)
    sid = _session(client)
    time.sleep(0.1)
    response = client.get(f"/v1/sessions/{sid}/state")
    assert response.status_code == 404


# --- events ---

def test_first_event_counts():
    client = make_client(make_service())
    sid = _session(client)
    response = client.post(f"/v1/sessions/{sid}/events", json={"pre": "a", "post": "b"})
    body = response.json()
    assert body == {"history_len": 0, "active_present": True, "current_hash": text_hash("b")}


def test_distant_event_finalizes():
    client = make_client(make_service())
    sid = _session(client)
    base = "\n".join(f"l{i}" for i in range(50))
    lines = base.split("\n")
    lines[0] = "X"
    mid = "\n".join(lines)
    client.post(f"/v1/sessions/{sid}/events", json={"pre": base, "post": mid})
    lines[40] = "Y"
    response = client.post(f"/v1/sessions/{sid}/events", json={"pre": mid, "post": "\n".join(lines)})
    assert response.json()["history_len"] == 1
    assert response.json()["active_present"] is True


def test_stale_pre_text_conflict():
    client = make_client(make_service())
    sid = _session(client)
    client.post(f"/v1/sessions/{sid}/events", json={"pre": "a", "post": "b"})
    response = client.post(f"/v1/sessions/{sid}/events", json={"pre": "WRONG", "post": "c"})
    assert response.status_code == 409
    assert response.json()["code"] == "STREAM_DISCONTINUITY"


# --- suggestions ---

def test_suggest_location_line():
    client = make_client(make_service(location=SequenceBackend(["LINE 24"])))
    sid = _session(client)
    client.post(f"/v1/sessions/{sid}/events", json={"pre": "\n".join(["x"] * 30), "post": "\n".join(["y"] + ["x"] * 29)})
    body = client.post(f"/v1/sessions/{sid}/suggest/location").json()
    assert body["kind"] == "location"
    assert body["location"] == 24
    assert body["latency_ms"] >= 0


def test_suggest_location_keep():
    client = make_client(make_service(location=SequenceBackend(["KEEP"])))
    sid = _session(client)
    body = client.post(f"/v1/sessions/{sid}/suggest/location").json()
    assert body["location"] == "keep"


def test_suggest_location_cold_start_allowed():
    client = make_client(make_service(location=SequenceBackend(["LINE 1"])))
    sid = _session(client)
    response = client.post(f"/v1/sessions/{sid}/suggest/location")
    assert response.status_code == 200


def test_unparseable_location_degrades_to_keep():
    client = make_client(make_service(location=SequenceBackend(["somewhere near the top?"])))
    sid = _session(client)
    body = client.post(f"/v1/sessions/{sid}/suggest/location").json()
    assert body["location"] == "keep"


def test_backend_error_surfaces_session_unchanged():
    client = make_client(make_service(location=FailingBackend()))
    sid = _session(client)
    response = client.post(f"/v1/sessions/{sid}/suggest/location")
    assert response.status_code == 502
    state = client.get(f"/v1/sessions/{sid}/state").json()
    assert state["pending_id"] is None


def test_suggest_edit_no_change():
    text = "\n".join(f"l{i}" for i in range(10))
    window = text  # radius 16 covers the whole 10-line file
    client = make_client(make_service(edit=SequenceBackend([f"```\n{window}\n```"])))
    sid = _session(client)
    client.post(f"/v1/sessions/{sid}/events", json={"pre": text, "post": text})  # seed
    body = client.post(f"/v1/sessions/{sid}/suggest/edit", json={"line": 5}).json()
    assert body["kind"] == "edit"
    assert body["diff"] == ""  # no change proposed


def test_suggest_edit_single_line_change():
    text = "\n".join(f"l{i}" for i in range(40))
    # Window around line 20 with radius 16: lines 4..36.
    window_lines = text.split("\n")[3:36]
    window_lines[20 - 4] = "CHANGED"
    response_text = "```\n" + "\n".join(window_lines) + "\n```"
    client = make_client(make_service(edit=SequenceBackend([response_text])))
    sid = _session(client)
    client.post(f"/v1/sessions/{sid}/events", json={"pre": text, "post": text})  # seed
    body = client.post(f"/v1/sessions/{sid}/suggest/edit", json={"line": 20}).json()
    diff_lines = body["diff"].splitlines()
    assert diff_lines == ["20-| l19", "20+| CHANGED"]


def test_suggest_edit_line_out_of_range():
    client = make_client(make_service())
    sid = _session(client)
    client.post(f"/v1/sessions/{sid}/events", json={"pre": "a\nb", "post": "a\nc"})
    response = client.post(f"/v1/sessions/{sid}/suggest/edit", json={"line": 10**6})
    assert response.status_code == 400
    assert response.json()["code"] == "LINE_OUT_OF_RANGE"


# --- accept / reject ---

def test_accept_edit_folds_into_history():
    text = "\n".join(f"l{i}" for i in range(8))
    new_window = text.split("\n")
    new_window[2] = "EDITED"
    client = make_client(make_service(edit=SequenceBackend(["```\n" + "\n".join(new_window) + "\n```"])))
    sid = _session(client)
    client.post(f"/v1/sessions/{sid}/events", json={"pre": text, "post": text})  # seed text via no-op
    sug = client.post(f"/v1/sessions/{sid}/suggest/edit", json={"line": 3}).json()
    acc = client.post(f"/v1/sessions/{sid}/accept", json={"suggestion_id": sug["suggestion_id"]}).json()
    assert acc["applied"] is True
    expected = "\n".join(new_window)
    assert acc["current_hash"] == text_hash(expected)
    state = client.get(f"/v1/sessions/{sid}/state").json()
    assert state["current_text"] == expected
    assert state["active_present"] is True  # accepted edit entered the trajectory


def test_accept_location_records_jump():
    client = make_client(make_service(location=SequenceBackend(["LINE 2"])))
    sid = _session(client)
    client.post(f"/v1/sessions/{sid}/events", json={"pre": "a\nb\nc", "post": "a\nb\nC"})
    sug = client.post(f"/v1/sessions/{sid}/suggest/location").json()
    acc = client.post(f"/v1/sessions/{sid}/accept", json={"suggestion_id": sug["suggestion_id"]}).json()
    assert acc["kind"] == "location"
    assert acc["jump_line"] == 2
    assert client.get(f"/v1/sessions/{sid}/state").json()["cursor_line"] == 2


def test_accept_stale_after_event_on_same_region():
    text = "\n".join(f"l{i}" for i in range(8))
    new_window = text.split("\n")
    new_window[2] = "EDITED"
    client = make_client(make_service(edit=SequenceBackend(["```\n" + "\n".join(new_window) + "\n```"])))
    sid = _session(client)
    client.post(f"/v1/sessions/{sid}/events", json={"pre": text, "post": text})
    sug = client.post(f"/v1/sessions/{sid}/suggest/edit", json={"line": 3}).json()
    # Developer types in the same region before accepting.
    typed = text.split("\n")
    typed[2] = "typed by hand"
    client.post(f"/v1/sessions/{sid}/events", json={"pre": text, "post": "\n".join(typed)})
    response = client.post(f"/v1/sessions/{sid}/accept", json={"suggestion_id": sug["suggestion_id"]})
    assert response.status_code == 409
    assert response.json()["code"] == "STALE_SUGGESTION"


def test_accept_without_pending():
    client = make_client(make_service())
    sid = _session(client)
    response = client.post(f"/v1/sessions/{sid}/accept", json={"suggestion_id": "nope"})
    assert response.status_code == 409
    assert response.json()["code"] == "NO_PENDING"


def test_reject_clears_pending():
    client = make_client(make_service(location=SequenceBackend(["LINE 1", "LINE 1"])))
    sid = _session(client)
    sug = client.post(f"/v1/sessions/{sid}/suggest/location").json()
    assert client.post(f"/v1/sessions/{sid}/reject", json={"suggestion_id": sug["suggestion_id"]}).json()["ok"]
    response = client.post(f"/v1/sessions/{sid}/accept", json={"suggestion_id": sug["suggestion_id"]})
    assert response.json()["code"] == "NO_PENDING"
    response = client.post(f"/v1/sessions/{sid}/reject", json={"suggestion_id": sug["suggestion_id"]})
    assert response.json()["code"] == "NO_PENDING"


def test_reject_wrong_id():
    client = make_client(make_service(location=SequenceBackend(["LINE 1"])))
    sid = _session(client)
    client.post(f"/v1/sessions/{sid}/suggest/location")
    response = client.post(f"/v1/sessions/{sid}/reject", json={"suggestion_id": "wrong"})
    assert response.json()["code"] == "NO_PENDING"


def test_single_pending_newer_suggestion_replaces():
    client = make_client(make_service(location=SequenceBackend(["LINE 1", "LINE 2"])))
    sid = _session(client)
    first = client.post(f"/v1/sessions/{sid}/suggest/location").json()
    second = client.post(f"/v1/sessions/{sid}/suggest/location").json()
    response = client.post(f"/v1/sessions/{sid}/accept", json={"suggestion_id": first["suggestion_id"]})
    assert response.json()["code"] == "NO_PENDING"
    state = client.get(f"/v1/sessions/{sid}/state").json()
    assert state["pending_id"] == second["suggestion_id"]


def test_healthz():
    client = make_client(make_service())
    assert client.get("/healthz").json()["status"] == "ok"


# --- the motivating-scenario loop end to end ---

def scripted_scenario_backends(radius: int):
    location = SequenceBackend([f"LINE {t}" for t in ROUND_TARGETS])
    edit = SequenceBackend([round_edit_response(i, radius) for i in (1, 2, 3)])
    return location, edit


def test_scenario_three_rounds_yield_expected_file():
    radius = 16
    location, edit = scripted_scenario_backends(radius)
    service = make_service(location=location, edit=edit, window_radius=radius)
    client = make_client(service)
    sid = _session(client)

    # Seeding edit: the developer adds the interface property by hand.
    response = client.post(
        f"/v1/sessions/{sid}/events",
        json={"pre": STATES[0], "post": STATES[1], "cursor_line": 6, "language": "TypeScriptReact"},
    )
    assert response.status_code == 200

    local_times = []
    for round_no, target in enumerate(ROUND_TARGETS, start=1):
        loc = client.post(f"/v1/sessions/{sid}/suggest/location").json()
        assert loc["location"] == target, f"round {round_no}"
        local_times.append(loc["local_ms"])
        acc = client.post(f"/v1/sessions/{sid}/accept", json={"suggestion_id": loc["suggestion_id"]}).json()
        assert acc["jump_line"] == target

        edit_sug = client.post(f"/v1/sessions/{sid}/suggest/edit", json={"line": target}).json()
        assert edit_sug["diff"] != ""
        local_times.append(edit_sug["local_ms"])
        acc = client.post(f"/v1/sessions/{sid}/accept", json={"suggestion_id": edit_sug["suggestion_id"]}).json()
        assert acc["applied"] is True
        assert acc["current_hash"] == text_hash(STATES[round_no + 1]), f"round {round_no}"

    state = client.get(f"/v1/sessions/{sid}/state").json()
    assert state["current_text"] == STATES[4]
    assert statistics.median(local_times) < 50.0


def test_scenario_accepted_edits_match_direct_application():
    # Accept-everything session ends at the same file as applying the
    # scripted edits directly (the mock's script IS states 2..4).
    radius = 16
    location, edit = scripted_scenario_backends(radius)
    service = make_service(location=location, edit=edit, window_radius=radius)
    client = make_client(service)
    sid = _session(client)
    client.post(f"/v1/sessions/{sid}/events", json={"pre": STATES[0], "post": STATES[1]})
    for target in ROUND_TARGETS:
        loc = client.post(f"/v1/sessions/{sid}/suggest/location").json()
        client.post(f"/v1/sessions/{sid}/accept", json={"suggestion_id": loc["suggestion_id"]})
        sug = client.post(f"/v1/sessions/{sid}/suggest/edit", json={"line": target}).json()
        client.post(f"/v1/sessions/{sid}/accept", json={"suggestion_id": sug["suggestion_id"]})
    final = client.get(f"/v1/sessions/{sid}/state").json()["current_text"]
    assert final == STATES[4]


def test_loop_keeps_trajectory_replay_sound():
    from nextedit.diff import apply_diff

    radius = 16
    location, edit = scripted_scenario_backends(radius)
    service = make_service(location=location, edit=edit, window_radius=radius)
    client = make_client(service)
    sid = _session(client)
    client.post(f"/v1/sessions/{sid}/events", json={"pre": STATES[0], "post": STATES[1]})
    for target in ROUND_TARGETS:
        loc = client.post(f"/v1/sessions/{sid}/suggest/location").json()
        client.post(f"/v1/sessions/{sid}/accept", json={"suggestion_id": loc["suggestion_id"]})
        sug = client.post(f"/v1/sessions/{sid}/suggest/edit", json={"line": target}).json()
        client.post(f"/v1/sessions/{sid}/accept", json={"suggestion_id": sug["suggestion_id"]})
    session = service.get_session(sid)
    replayed = STATES[0]
    for delta in session.state.finalize():
        replayed = apply_diff(replayed, delta)
    assert replayed == STATES[4]


# --- concurrency: independent sessions in parallel ---

def test_concurrent_sessions_stay_independent():
    import threading

    from nextedit.diff import apply_diff

    service = make_service(location=EchoKeepBackend(), edit=EchoKeepBackend(), max_sessions=64)
    errors = []

    def run_session(seed: int):
        try:
            import random

            rng = random.Random(seed)
            session = service.create_session()
            cur = "\n".join(f"s{seed}_l{i}" for i in range(30))
            initial = cur
            from nextedit.diff import CodeSnapshot
            from nextedit.trajectory import EditEvent

            for step in range(25):
                lines = cur.split("\n")
                lines[rng.randrange(len(lines))] = f"s{seed}_e{step}"
                new = "\n".join(lines)
                service.push_event(session.session_id, EditEvent(CodeSnapshot(cur), CodeSnapshot(new), step))
                cur = new
            state = service.get_session(session.session_id).state
            replayed = initial
            for delta in state.finalize():
                replayed = apply_diff(replayed, delta)
            assert replayed == cur
        except Exception as exc:  # surfaced to the main thread
            errors.append(exc)

    threads = [threading.Thread(target=run_session, args=(i,)) for i in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
