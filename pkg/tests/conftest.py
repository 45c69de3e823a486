"""Shared fixtures: stub extraction tooling and fake endpoints.

No test here needs ffmpeg or the network. The extraction "tool" is a
python one-liner that writes `<uri> <timestamp>` bytes into the frame
file, so frame content is distinct per timestamp and stable across runs;
the duration probe reads the fake video file's text content.
"""

from __future__ import annotations

import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


import pytest

from capweave.gateway import BackoffPolicy
from capweave.ingest import VideoSource

PY = sys.executable

FAST_BACKOFF = BackoffPolicy(initial_s=0.001, factor=2.0, cap_s=0.004, max_attempts=5)

OK_BODY = {"choices": [{"message": {"content": "hello from the fake server"}}]}

# Writes "<uri> <timestamp>" into the frame file: distinct bytes per frame,
# stable across runs, no ffmpeg needed. Placeholders substitute per token, so
# they survive inside the quoted sh fragment.
STUB_EXTRACT_TEMPLATE = (
    "sh -c \"printf '%s %s' '{input}' '{timestamp}' > '{output}'\""
)

# Prints the fake video file's content (its declared duration).
STUB_PROBE_TEMPLATE = (
    f'{PY} -c "import sys; print(open(sys.argv[1]).read().strip())" {{input}}'
)

FAILING_EXTRACT_TEMPLATE = f'{PY} -c "import sys; sys.exit(3)" {{output}} {{input}} {{timestamp}}'


@pytest.fixture
def make_video(tmp_path):
    """Create a fake video file whose bytes carry its probe-able duration."""

    def _make(video_id: str, duration_s: float, declared: bool = True) -> VideoSource:
        path = tmp_path / f"{video_id}.vid"
        path.write_text(str(duration_s), encoding="utf-8")
        return VideoSource(
            id=video_id, uri=str(path), duration_s=duration_s if declared else None
        )

    return _make


@pytest.fixture
def workdir(tmp_path):
    d = tmp_path / "work"
    d.mkdir()
    return d


class ScriptedHandler(BaseHTTPRequestHandler):
    """Chat-completions stand-in whose responses follow a per-test script."""

    script: list[tuple[int, object]] = []
    received: list[dict] = []
    lock = threading.Lock()

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length)) if length else {}
        with self.lock:
            self.received.append(
                {"path": self.path, "body": body, "headers": dict(self.headers)}
            )
            status, payload = self.script.pop(0) if self.script else (200, OK_BODY)
        data = (json.dumps(payload) if isinstance(payload, dict) else str(payload)).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def fake_server():
    ScriptedHandler.script = []
    ScriptedHandler.received = []
    server = ThreadingHTTPServer(("127.0.0.1", 0), ScriptedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}", ScriptedHandler
    server.shutdown()
