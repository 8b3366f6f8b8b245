"""HTTP interface over sessions.

Stdlib-only server (ThreadingHTTPServer). Every response body is canonical
JSON. Domain faults map to status codes: a finding that travels backwards
in time is 409 with error "time-regression"; anything else the engine
rejects is 422; malformed JSON is 400; unknown sessions and paths are 404.

With a state directory, every accepted directive is appended as one JSON
line to the session's log file, and logs found at startup are replayed to
restore the sessions they describe.
"""

from __future__ import annotations

import json
import os
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import reports, session as sess
from .diagram import to_dot
from .errors import EngineError, TimeRegressionError
from .kb import KnowledgeBase
from .kbformat import serialize_kb

_SESSION_RE = re.compile(r"^/sessions/([A-Za-z0-9_\-]+)(?:/([a-z]+))?$")


class SessionStore:
    """Thread-safe session registry with optional append-only persistence."""

    def __init__(self, kb: KnowledgeBase, state_dir: str | None = None):
        self.kb = kb
        self.state_dir = state_dir
        self.sessions: dict[str, sess.SessionState] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry = threading.Lock()
        self._counter = 0
        if state_dir:
            os.makedirs(state_dir, exist_ok=True)
            self._restore()

    # -- id and lock management -----------------------------------------

    def _new_id(self) -> str:
        with self._registry:
            self._counter += 1
            return f"s{self._counter}"

    def _lock(self, sid: str) -> threading.Lock:
        with self._registry:
            if sid not in self._locks:
                self._locks[sid] = threading.Lock()
            return self._locks[sid]

    # -- persistence ------------------------------------------------------

    def _log_path(self, sid: str) -> str:
        return os.path.join(self.state_dir, f"{sid}.log")

    def _append(self, sid: str, entry: dict) -> None:
        if not self.state_dir:
            return
        with open(self._log_path(sid), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def _restore(self) -> None:
        for name in sorted(os.listdir(self.state_dir)):
            if not name.endswith(".log"):
                continue
            sid = name[:-len(".log")]
            state = None
            with open(os.path.join(self.state_dir, name),
                      encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    entry = json.loads(line)
                    verb = entry["verb"]
                    if verb == "create":
                        state = sess.new_session(self.kb,
                                                 truth=entry.get("truth"))
                    elif state is None:
                        break
                    elif verb == "observe":
                        state = sess.observe(state, entry["var"],
                                             entry["state"], entry["time"])
                    elif verb == "act":
                        state = sess.act(state, entry["treatment"],
                                         entry["time"])
                    elif verb == "feedback":
                        state = sess.feedback(state, entry["var"],
                                              entry["state"], entry["time"])
            if state is not None:
                self.sessions[sid] = state
                m = re.match(r"^s(\d+)$", sid)
                if m:
                    self._counter = max(self._counter, int(m.group(1)))

    # -- operations -------------------------------------------------------

    def create(self, truth=None) -> str:
        sid = self._new_id()
        state = sess.new_session(self.kb, truth=truth)
        with self._lock(sid):
            self.sessions[sid] = state
            self._append(sid, {"verb": "create", "truth": truth})
        return sid

    def get(self, sid: str) -> sess.SessionState | None:
        return self.sessions.get(sid)

    def apply(self, sid: str, verb: str, body: dict) -> sess.SessionState:
        with self._lock(sid):
            state = self.sessions[sid]
            if verb == "observe":
                state = sess.observe(state, body["var"], body["state"],
                                     body["time"])
                entry = {"verb": verb, "var": body["var"],
                         "state": body["state"], "time": body["time"]}
            elif verb == "act":
                state = sess.act(state, body["treatment"], body["time"])
                entry = {"verb": verb, "treatment": body["treatment"],
                         "time": body["time"]}
            elif verb == "feedback":
                state = sess.feedback(state, body["var"], body["state"],
                                      body["time"])
                entry = {"verb": verb, "var": body["var"],
                         "state": body["state"], "time": body["time"]}
            else:
                raise KeyError(verb)
            self.sessions[sid] = state
            self._append(sid, entry)
            return state


def _log_payload(state: sess.SessionState) -> dict:
    return {
        "events": [
            {"kind": e.kind, "time": e.time,
             "payload": dict(sorted(e.payload.items()))}
            for e in state.events
        ],
        "observations": [
            {"var": o.var, "state": o.state, "time": o.time,
             "source": o.source}
            for o in state.observations
        ],
        "acts": [reports.act_payload(a) for a in state.acts],
    }


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def store(self) -> SessionStore:
        return self.server.store          # type: ignore[attr-defined]

    def log_message(self, fmt, *args):    # tests run quiet
        pass

    # -- plumbing ---------------------------------------------------------

    def _send(self, code: int, payload) -> None:
        body = reports.canonical_json(payload).encode("utf-8") + b"\n"
        self.send_response(code)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self._cors()
        self.end_headers()
        self.wfile.write(body)

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods",
                         "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _error(self, code: int, tag: str, message: str) -> None:
        self._send(code, {"error": tag, "message": message})

    def _body(self) -> dict | None:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        try:
            body = json.loads(raw or b"{}")
        except ValueError:
            self._error(400, "bad-json", "request body is not valid JSON")
            return None
        if not isinstance(body, dict):
            self._error(400, "bad-json", "request body must be an object")
            return None
        return body

    # -- routes -------------------------------------------------------------

    def do_OPTIONS(self) -> None:
        self.send_response(204)
        self.send_header("Content-Length", "0")
        self._cors()
        self.end_headers()

    def do_GET(self) -> None:
        if self.path == "/kb":
            self._send(200, {"text": serialize_kb(self.store.kb)})
            return
        if self.path == "/sessions":
            self._send(200, {"sessions": sorted(self.store.sessions)})
            return
        m = _SESSION_RE.match(self.path)
        if not m:
            self._error(404, "not-found", f"no route for {self.path}")
            return
        sid, tail = m.group(1), m.group(2)
        state = self.store.get(sid)
        if state is None:
            self._error(404, "not-found", f"no session {sid!r}")
            return
        if tail == "recommendation":
            self._send(200, reports.recommendation_payload(state))
        elif tail == "diagram":
            if state.diagram is None:
                self._error(404, "not-found", "session has no model yet")
                return
            payload = reports.diagram_payload(state.diagram)
            payload["dot"] = to_dot(state.diagram)
            self._send(200, payload)
        elif tail == "log":
            self._send(200, _log_payload(state))
        elif tail == "snapshot":
            self._send(200, reports.snapshot_payload(state))
        else:
            self._error(404, "not-found", f"no route for {self.path}")

    def do_POST(self) -> None:
        body = self._body()
        if body is None:
            return
        if self.path == "/sessions":
            try:
                sid = self.store.create(truth=body.get("truth"))
            except EngineError as exc:
                self._error(422, "invalid", str(exc))
                return
            self._send(201, {"id": sid})
            return
        m = _SESSION_RE.match(self.path)
        if not m or m.group(2) not in ("observe", "act", "feedback"):
            self._error(404, "not-found", f"no route for {self.path}")
            return
        sid, verb = m.group(1), m.group(2)
        if self.store.get(sid) is None:
            self._error(404, "not-found", f"no session {sid!r}")
            return
        try:
            state = self.store.apply(sid, verb, body)
        except KeyError as exc:
            self._error(422, "invalid", f"missing field {exc}")
            return
        except TimeRegressionError as exc:
            self._error(409, "time-regression", str(exc))
            return
        except EngineError as exc:
            self._error(422, "invalid", str(exc))
            return
        payload = reports.recommendation_payload(state)
        if verb == "act":
            payload["record"] = reports.act_payload(state.acts[-1])
        self._send(200, payload)


def make_server(kb: KnowledgeBase, host: str = "127.0.0.1", port: int = 0,
                state_dir: str | None = None) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), _Handler)
    server.store = SessionStore(kb, state_dir)    # type: ignore[attr-defined]
    return server


def serve(kb: KnowledgeBase, host: str = "127.0.0.1", port: int = 8350,
          state_dir: str | None = None) -> None:
    server = make_server(kb, host, port, state_dir)
    print(f"serving on http://{host}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
