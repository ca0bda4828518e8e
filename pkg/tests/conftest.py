import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest


class StubServer:
    """Tiny JSON-over-HTTP server; ``handler(body) -> (status, payload)``."""

    def __init__(self):
        self.handler = lambda body: (200, {})
        self.requests: list[dict] = []
        self.headers: list[dict] = []
        self._lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                n = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(n) or b"{}")
                with stub._lock:
                    stub.requests.append(body)
                    stub.headers.append(dict(self.headers))
                status, payload = stub.handler(body)
                data = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.httpd.server_address[1]}/"
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def stub_server():
    s = StubServer()
    yield s
    s.close()


_ACCEPTANCE: list[tuple[str, str, float]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if item.get_closest_marker("acceptance") and (rep.when == "call" or rep.outcome != "passed"):
        doc = (getattr(item.obj, "__doc__", None) or item.name).strip().splitlines()[0]
        detail = "; ".join(str(v) for k, v in rep.user_properties if k == "detail")
        if detail:
            doc = f"{doc} [{detail}]"
        _ACCEPTANCE.append((doc, "PASS" if rep.passed else "FAIL", rep.duration))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for doc, status, secs in _ACCEPTANCE:
        terminalreporter.write_line(f"{status}  {doc}  ({secs:.2f}s)")
