"""The two external surfaces: command line and HTTP."""

import http.client
import json
import threading

import pytest

from diagid import serialize_kb
from diagid.cli import main
from diagid.reports import canonical_json, snapshot_payload
from diagid.server import make_server

from conftest import FIXTURES, read_fixture

CAR = str(FIXTURES / "car.kb")
ABDOMINAL = str(FIXTURES / "abdominal.kb")
SCRIPT = str(FIXTURES / "appendicitis_session.txt")


def run_cli(capsys, *argv):
    try:
        code = main(list(argv))
    except SystemExit as exc:
        code = exc.code
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestCliValidate:
    def test_clean_kb_exits_zero(self, capsys):
        code, out, _ = run_cli(capsys, "validate", ABDOMINAL)
        assert code == 0
        payload = json.loads(out)
        assert payload == {"valid": True, "violations": []}

    def test_violations_exit_one(self, capsys, tmp_path):
        bad = tmp_path / "bad.kb"
        bad.write_text(read_fixture("car.kb").replace(
            "| : 0.4, 0.6", "| : 0.4, 0.7"))
        code, out, _ = run_cli(capsys, "validate", str(bad))
        assert code == 1
        payload = json.loads(out)
        assert payload["valid"] is False
        assert any(v["kind"] == "row-sum" for v in payload["violations"])

    def test_syntax_error_exits_two(self, capsys, tmp_path):
        bad = tmp_path / "bad.kb"
        bad.write_text("time t1\nfrobnicate\n")
        code, _, err = run_cli(capsys, "validate", str(bad))
        assert code == 2
        assert "line 2" in err

    def test_unreadable_file_exits_two(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "validate",
                               str(tmp_path / "missing.kb"))
        assert code == 2
        assert "cannot read" in err


class TestCliDiagnose:
    def test_payload_carries_the_recommendation(self, capsys):
        code, out, _ = run_cli(capsys, "diagnose", ABDOMINAL,
                               "-o", "N=yes@t1", "-o", "P=yes@t1")
        assert code == 0
        payload = json.loads(out)
        assert set(payload) == {"model_time", "decision", "sensitivity",
                                "trace"}
        assert payload["model_time"] == "t1"
        assert payload["decision"]["best_treatment"] == "Diovol"
        assert payload["trace"]["included"]["US"] == "ancestor-of-observed"
        # the t2 probe sees the raised hypothesis priors
        assert payload["sensitivity"]["verdict"] == "topology"

    def test_time_defaults_to_the_last_finding(self, capsys):
        code, out, _ = run_cli(capsys, "diagnose", ABDOMINAL,
                               "-o", "N=yes@t1", "-o", "P=yes@t2")
        assert code == 0
        assert json.loads(out)["model_time"] == "t2"

    def test_missing_observations_exit_two(self, capsys):
        code, _, err = run_cli(capsys, "diagnose", ABDOMINAL)
        assert code == 2
        assert "--observe" in err

    def test_malformed_observation_exits_two(self, capsys):
        code, _, err = run_cli(capsys, "diagnose", ABDOMINAL,
                               "-o", "N=yes")
        assert code == 2
        assert "VAR=STATE@TIME" in err

    def test_domain_errors_exit_one(self, capsys):
        code, _, err = run_cli(capsys, "diagnose", ABDOMINAL,
                               "-o", "GHOST=yes@t1")
        assert code == 1
        assert err.startswith("error:")


class TestCliOther:
    def test_sensitivity_command(self, capsys):
        code, out, _ = run_cli(capsys, "sensitivity", ABDOMINAL,
                               "-o", "N=yes@t1")
        assert code == 0
        payload = json.loads(out)
        assert payload["incumbent"] == "Diovol"
        exceeders = [c for c in payload["challengers"] if c["exceeds_beta"]]
        assert {(c["treatment"], c["time"]) for c in exceeders} == \
            {("appendectomy", "t2"), ("cyst-treatment", "t2")}

    def test_replay_prints_the_transcript(self, capsys):
        code, out, _ = run_cli(capsys, "replay", ABDOMINAL, SCRIPT)
        assert code == 0
        transcript = json.loads(out)
        assert [t["verb"] for t in transcript] == \
            ["observe", "observe", "act", "feedback", "observe"]
        assert transcript[-1]["recommendation"]["decision"][
            "best_treatment"] == "appendectomy"

    def test_export_is_canonical(self, capsys):
        code, out, _ = run_cli(capsys, "export", CAR)
        assert code == 0
        from diagid import parse_kb
        assert out == serialize_kb(parse_kb(read_fixture("car.kb")))

    def test_export_dot(self, capsys):
        code, out, _ = run_cli(capsys, "export", CAR, "--dot",
                               "-o", "ST=no@t1")
        assert code == 0
        assert out.startswith("digraph")
        code, _, err = run_cli(capsys, "export", CAR, "--dot")
        assert code == 2
        assert "--observe" in err


@pytest.fixture
def server(abdominal_kb, tmp_path_factory):
    srv = make_server(abdominal_kb, port=0)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield srv
    srv.shutdown()
    srv.server_close()
    thread.join(timeout=5)


def call(srv, method, path, body=None, raw=None):
    conn = http.client.HTTPConnection("127.0.0.1",
                                      srv.server_address[1], timeout=10)
    payload = raw if raw is not None else (
        json.dumps(body).encode() if body is not None else None)
    headers = {"Content-Type": "application/json"} if payload else {}
    conn.request(method, path, payload, headers)
    resp = conn.getresponse()
    data = resp.read()
    conn.close()
    parsed = json.loads(data) if data else None
    return resp, parsed


class TestHttp:
    def test_kb_and_session_listing(self, server, abdominal_kb):
        resp, body = call(server, "GET", "/kb")
        assert resp.status == 200
        assert body["text"] == serialize_kb(abdominal_kb)
        resp, body = call(server, "GET", "/sessions")
        assert body == {"sessions": []}

    def test_session_lifecycle(self, server):
        resp, body = call(server, "POST", "/sessions", {})
        assert resp.status == 201
        sid = body["id"]

        resp, rec = call(server, "POST", f"/sessions/{sid}/observe",
                         {"var": "N", "state": "yes", "time": "t1"})
        assert resp.status == 200
        assert set(rec) == {"model_time", "decision", "sensitivity",
                            "trace"}
        call(server, "POST", f"/sessions/{sid}/observe",
             {"var": "P", "state": "yes", "time": "t1"})
        assert rec["decision"]["best_treatment"] == "Diovol"

        resp, rec = call(server, "POST", f"/sessions/{sid}/act",
                         {"treatment": "Diovol", "time": "t1"})
        assert resp.status == 200
        assert rec["record"]["treatment"] == "Diovol"
        assert rec["record"]["awaiting_outcome"] is False

        resp, rec = call(server, "POST", f"/sessions/{sid}/feedback",
                         {"var": "P", "state": "yes", "time": "t2"})
        assert resp.status == 200
        assert rec["sensitivity"]["verdict"] == "topology"
        assert rec["model_time"] == "t2"

        resp, body = call(server, "GET", f"/sessions/{sid}/recommendation")
        assert resp.status == 200
        assert body == rec

        resp, body = call(server, "GET", f"/sessions/{sid}/diagram")
        assert resp.status == 200
        assert body["dot"].startswith("digraph")
        assert {c["name"] for c in body["chance"]} >= {"A", "GC"}

        resp, body = call(server, "GET", f"/sessions/{sid}/log")
        assert [e["kind"] for e in body["events"]] == \
            ["observe", "observe", "act", "feedback"]

        resp, body = call(server, "GET", f"/sessions/{sid}/snapshot")
        assert resp.status == 200
        assert body["model_time"] == "t2"
        assert body["awaiting"] is None
        assert body["recommendation"]["decision"]["best_treatment"] == \
            "appendectomy"

    def test_error_mapping(self, server):
        _, body = call(server, "POST", "/sessions", {})
        sid = body["id"]

        resp, body = call(server, "POST", f"/sessions/{sid}/observe",
                          raw=b"{not json")
        assert resp.status == 400
        assert body["error"] == "bad-json"

        resp, body = call(server, "POST", f"/sessions/{sid}/observe",
                          {"var": "N", "time": "t1"})
        assert resp.status == 422
        assert "missing field" in body["message"]

        resp, body = call(server, "POST", f"/sessions/{sid}/observe",
                          {"var": "GHOST", "state": "yes", "time": "t1"})
        assert resp.status == 422
        assert body["error"] == "invalid"

        call(server, "POST", f"/sessions/{sid}/observe",
             {"var": "N", "state": "yes", "time": "t2"})
        resp, body = call(server, "POST", f"/sessions/{sid}/observe",
                          {"var": "P", "state": "yes", "time": "t1"})
        assert resp.status == 409
        assert body["error"] == "time-regression"

        resp, body = call(server, "GET", "/sessions/nope/snapshot")
        assert resp.status == 404
        resp, body = call(server, "GET", "/frogs")
        assert resp.status == 404
        resp, body = call(server, "POST", f"/sessions/{sid}/dance", {})
        assert resp.status == 404

    def test_create_with_bad_truth_is_invalid(self, server):
        resp, body = call(server, "POST", "/sessions",
                          {"truth": {"N": "yes"}})
        assert resp.status == 422
        assert body["error"] == "invalid"

    def test_options_preflight(self, server):
        conn = http.client.HTTPConnection("127.0.0.1",
                                          server.server_address[1],
                                          timeout=10)
        conn.request("OPTIONS", "/sessions")
        resp = conn.getresponse()
        resp.read()
        conn.close()
        assert resp.status == 204
        assert resp.headers["Access-Control-Allow-Origin"] == "*"

    def test_responses_carry_cors_headers(self, server):
        resp, _ = call(server, "GET", "/kb")
        assert resp.headers["Access-Control-Allow-Origin"] == "*"


class TestPersistence:
    def test_sessions_survive_a_restart(self, abdominal_kb, tmp_path):
        state_dir = str(tmp_path / "state")
        srv = make_server(abdominal_kb, port=0, state_dir=state_dir)
        thread = threading.Thread(target=srv.serve_forever, daemon=True)
        thread.start()
        try:
            _, body = call(srv, "POST", "/sessions", {})
            sid = body["id"]
            call(srv, "POST", f"/sessions/{sid}/observe",
                 {"var": "N", "state": "yes", "time": "t1"})
            call(srv, "POST", f"/sessions/{sid}/act",
                 {"treatment": "Diovol", "time": "t1"})
            call(srv, "POST", f"/sessions/{sid}/feedback",
                 {"var": "P", "state": "yes", "time": "t2"})
            _, want = call(srv, "GET", f"/sessions/{sid}/snapshot")
            original = srv.store.sessions[sid]
        finally:
            srv.shutdown()
            srv.server_close()
            thread.join(timeout=5)

        srv2 = make_server(abdominal_kb, port=0, state_dir=state_dir)
        thread2 = threading.Thread(target=srv2.serve_forever, daemon=True)
        thread2.start()
        try:
            _, listing = call(srv2, "GET", "/sessions")
            assert listing == {"sessions": [sid]}
            _, got = call(srv2, "GET", f"/sessions/{sid}/snapshot")
            assert canonical_json(got) == canonical_json(want)
            restored = srv2.store.sessions[sid]
            assert canonical_json(snapshot_payload(restored)) == \
                canonical_json(snapshot_payload(original))
            # the id counter picks up where the log left off
            _, body = call(srv2, "POST", "/sessions", {})
            assert body["id"] != sid
        finally:
            srv2.shutdown()
            srv2.server_close()
            thread2.join(timeout=5)
