"""A plain HTTP/1.1 recording proxy that logs each exchange as one JSONL line."""

from __future__ import annotations

import base64
import json
import select
import socket
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import urlsplit, urlunsplit

from .executor import HOP_BY_HOP, TransportError, send_request


@dataclass
class ProxyConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 0
    upstream: str | None = None  # fixed origin enables reverse-proxy mode
    log_path: str | Path = "recording.jsonl"
    max_body_capture: int = 1_000_000

    def __post_init__(self):
        if self.max_body_capture <= 0:
            raise ValueError("max_body_capture must be positive")


def _b64_capture(body: bytes | None, limit: int) -> tuple[str | None, bool]:
    if not body:
        return None, False
    truncated = len(body) > limit
    return base64.b64encode(body[:limit]).decode("ascii"), truncated


class _ProxyHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        pass

    def _target_url(self) -> str | None:
        if self.path.startswith("http://") or self.path.startswith("https://"):
            return self.path
        if self.server.config.upstream:
            return self.server.config.upstream.rstrip("/") + self.path
        return None

    def _client_headers(self):
        headers = []
        for name, value in self.headers.items():
            if name.lower() in HOP_BY_HOP or name.lower() == "host":
                continue
            headers.append((name, value))
        return headers

    def _forward(self):
        method = self.command
        url = self._target_url()
        if url is None:
            self.send_error(400, "absolute-form request target or --upstream required")
            return
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else None
        try:
            response = send_request(method, url, self._client_headers(), body, timeout=30)
        except TransportError as exc:
            self.send_error(502, f"upstream unreachable: {exc}")
            return

        # log first so the record is durable before the client sees the reply
        self.server.record(method, url, self._client_headers(), body, response)
        payload = response.body or b""
        self.send_response(response.status)
        for name, value in response.headers:
            if name.lower() in HOP_BY_HOP or name.lower() == "content-length":
                continue
            self.send_header(name, value)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        if payload and method != "HEAD":
            self.wfile.write(payload)

    def do_CONNECT(self):
        # TLS pass-through: forwarded but never recorded
        host, _, port = self.path.partition(":")
        try:
            upstream = socket.create_connection((host, int(port or 443)), timeout=30)
        except OSError:
            self.send_error(502, "cannot reach tunnel target")
            return
        self.send_response(200, "Connection Established")
        self.end_headers()
        self.server.skipped_tunnels += 1
        self._pump(self.connection, upstream)
        self.close_connection = True

    def _pump(self, client: socket.socket, upstream: socket.socket):
        sockets = [client, upstream]
        try:
            while True:
                readable, _, _ = select.select(sockets, [], [], 30)
                if not readable:
                    break
                for sock in readable:
                    data = sock.recv(65536)
                    if not data:
                        return
                    (upstream if sock is client else client).sendall(data)
        except OSError:
            pass
        finally:
            upstream.close()

    def _handle(self):
        self._forward()

    do_GET = do_POST = do_PUT = do_PATCH = do_DELETE = _handle
    do_OPTIONS = do_HEAD = do_TRACE = _handle


class RecordingProxy(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, config: ProxyConfig):
        super().__init__((config.listen_host, config.listen_port), _ProxyHandler)
        self.config = config
        self.skipped_tunnels = 0
        self.recorded = 0
        self.log_failed = False
        self._log_lock = threading.Lock()
        self._thread: threading.Thread | None = None
        Path(config.log_path).touch()

    @property
    def listen_url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def record(self, method, url, req_headers, req_body, response):
        limit = self.config.max_body_capture
        req_b64, req_trunc = _b64_capture(req_body, limit)
        resp_b64, resp_trunc = _b64_capture(response.body, limit)
        entry = {
            "ts": datetime.now(timezone.utc).isoformat(),
            "method": method,
            "url": _strip_fragment(url),
            "req_headers": [list(h) for h in req_headers],
            "req_body_b64": req_b64,
            "status": response.status,
            "resp_headers": [list(h) for h in response.headers],
            "resp_body_b64": resp_b64,
            "resp_mime": response.body_mime,
        }
        if req_trunc:
            entry["req_body_truncated"] = True
        if resp_trunc:
            entry["resp_body_truncated"] = True
        line = json.dumps(entry) + "\n"
        with self._log_lock:
            try:
                with open(self.config.log_path, "a", encoding="utf-8") as fh:
                    fh.write(line)
                self.recorded += 1
            except OSError:
                self.log_failed = True
                threading.Thread(target=self.shutdown, daemon=True).start()

    def start(self):
        self._thread = threading.Thread(
            target=self.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


def _strip_fragment(url: str) -> str:
    parts = urlsplit(url)
    return urlunsplit((parts.scheme, parts.netloc, parts.path, parts.query, ""))


def serve(config: ProxyConfig) -> int:
    """Run the proxy until interrupted; nonzero exit on log write failure."""
    proxy = RecordingProxy(config)
    print(f"recording proxy on {proxy.listen_url} -> "
          f"{config.upstream or 'absolute-form targets'}, log: {config.log_path}")
    try:
        proxy.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        proxy.server_close()
    return 1 if proxy.log_failed else 0
