"""Deterministic in-process REST service used by the end-to-end tests.

Serves a small users/articles/tags API with a reset endpoint so identical
request sequences yield identical responses. OPTIONS succeeds on every route
but is deliberately left out of the shipped ground-truth spec, so evaluation
runs surface it as an implemented-but-undocumented operation.
"""

from __future__ import annotations

import json
import secrets
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources


def _seed_state() -> dict:
    return {
        "users": {
            "user1": {"id": 1, "name": "user1", "role": "user"},
            "user2": {"id": 2, "name": "user2", "role": "user"},
        },
        "articles": {
            1: {
                "id": 1,
                "title": "carving apis",
                "author": "user1",
                "comments": [{"id": 11, "body": "nice read", "author": "user2"}],
            },
            2: {
                "id": 2,
                "title": "probing apis",
                "author": "user2",
                "comments": [{"id": 21, "body": "good follow up", "author": "user1"}],
            },
        },
        "tags": [
            {"id": 1, "name": "tag1", "author": "user1"},
            {"id": 2, "name": "tag2", "author": "user1"},
        ],
        "sessions": {},
        "next_article_id": 3,
    }


class FixtureHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "fixture/0.1"

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    # -- plumbing ------------------------------------------------------------

    def _json(self, status: int, payload, extra_headers=()):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        for name, value in extra_headers:
            self.send_header(name, value)
        self.end_headers()
        self.wfile.write(body)

    def _empty(self, status: int, extra_headers=()):
        self.send_response(status)
        self.send_header("Content-Length", "0")
        for name, value in extra_headers:
            self.send_header(name, value)
        self.end_headers()

    def _read_body(self):
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def _segments(self):
        path = self.path.split("?", 1)[0].split("#", 1)[0]
        return [s for s in path.split("/") if s]

    # -- dispatch -------------------------------------------------------------

    def _route(self, method: str):
        state = self.server.state
        segs = self._segments()

        if method == "OPTIONS" and self.server.route_exists(segs):
            # succeeds everywhere but is not documented in the ground truth
            self._empty(200, [("Allow", "GET, POST, OPTIONS")])
            return

        with self.server.lock:
            handler = self.server.match(segs, method)
            if handler == "unknown-path":
                self._json(404, {"error": "not found"})
            elif handler == "bad-method":
                self._json(405, {"error": "method not allowed"})
            else:
                handler(self, state, segs)

    def do_GET(self):
        self._route("GET")

    def do_POST(self):
        self._route("POST")

    def do_PUT(self):
        self._route("PUT")

    def do_PATCH(self):
        self._route("PATCH")

    def do_DELETE(self):
        self._route("DELETE")

    def do_OPTIONS(self):
        self._route("OPTIONS")


# -- route handlers -----------------------------------------------------------


def _list_users(h, state, segs):
    h._json(200, sorted(state["users"].values(), key=lambda u: u["id"]))


def _get_user(h, state, segs):
    user = state["users"].get(segs[1])
    if user is None:
        h._json(404, {"error": "no such user"})
    else:
        h._json(200, user)


def _get_user_info(h, state, segs):
    _get_user(h, state, segs)


def _follow(h, state, segs):
    user = state["users"].get(segs[1])
    if user is None:
        h._json(404, {"error": "no such user"})
    else:
        h._json(200, {"user": segs[1], "following": True})


def _list_articles(h, state, segs):
    summaries = [
        {"id": a["id"], "title": a["title"], "author": a["author"]}
        for a in sorted(state["articles"].values(), key=lambda a: a["id"])
    ]
    h._json(200, summaries)


def _create_article(h, state, segs):
    try:
        payload = json.loads(h._read_body() or b"{}")
    except ValueError:
        h._json(400, {"error": "invalid JSON"})
        return
    if not isinstance(payload, dict):
        h._json(400, {"error": "expected an object"})
        return
    article_id = state["next_article_id"]
    state["next_article_id"] += 1
    article = {
        "id": article_id,
        "title": payload.get("title", f"untitled {article_id}"),
        "author": payload.get("author", "user1"),
        "comments": [],
    }
    state["articles"][article_id] = article
    h._json(201, article)


def _get_article(h, state, segs):
    article = _find_article(state, segs[1])
    if article is None:
        h._json(404, {"error": "no such article"})
    else:
        h._json(200, article)


def _get_comments(h, state, segs):
    article = _find_article(state, segs[1])
    if article is None:
        h._json(404, {"error": "no such article"})
    else:
        h._json(200, article["comments"])


def _find_article(state, raw_id):
    try:
        return state["articles"].get(int(raw_id))
    except ValueError:
        return None


def _list_tags(h, state, segs):
    h._json(200, state["tags"])


def _get_tag(h, state, segs):
    try:
        tag_id = int(segs[1])
    except ValueError:
        h._json(404, {"error": "no such tag"})
        return
    tag = next((t for t in state["tags"] if t["id"] == tag_id), None)
    if tag is None:
        h._json(404, {"error": "no such tag"})
    else:
        h._json(200, tag)


def _login(h, state, segs):
    try:
        payload = json.loads(h._read_body() or b"{}")
    except ValueError:
        payload = {}
    name = payload.get("name", "user1") if isinstance(payload, dict) else "user1"
    token = secrets.token_hex(8)
    state["sessions"][token] = name
    h._json(200, {"status": "ok", "session_user": name},
            [("Set-Cookie", f"session={token}; Path=/")])


def _reset(h, state, segs):
    h.server.state.clear()
    h.server.state.update(_seed_state())
    h._json(200, {"status": "reset"})


# (segment pattern, methods -> handler); "*" matches any single segment
_ROUTES = [
    (("users",), {"GET": _list_users}),
    (("users", "login"), {"POST": _login}),
    (("users", "*"), {"GET": _get_user}),
    (("users", "*", "info"), {"GET": _get_user_info}),
    (("users", "*", "follow"), {"GET": _follow, "POST": _follow}),
    (("articles",), {"GET": _list_articles, "POST": _create_article}),
    (("articles", "*"), {"GET": _get_article}),
    (("articles", "*", "comments"), {"GET": _get_comments}),
    (("tags",), {"GET": _list_tags}),
    (("tags", "*"), {"GET": _get_tag}),
    (("__reset",), {"POST": _reset}),
]


class FixtureServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), FixtureHandler)
        self.state = _seed_state()
        self.lock = threading.RLock()
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def route_exists(self, segs) -> bool:
        return any(_match_pattern(pattern, segs) for pattern, _ in _ROUTES)

    def match(self, segs, method: str):
        matched = [methods for pattern, methods in _ROUTES if _match_pattern(pattern, segs)]
        if not matched:
            return "unknown-path"
        for methods in matched:
            if method in methods:
                return methods[method]
        return "bad-method"

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


def _match_pattern(pattern, segs) -> bool:
    if len(pattern) != len(segs):
        return False
    return all(p == "*" or p == s for p, s in zip(pattern, segs))


def ground_truth_text() -> str:
    """The hand-written OpenAPI ground truth shipped with the fixture."""
    return resources.files("restcarver").joinpath("data/fixture-gt.yaml").read_text("utf-8")


def write_ground_truth(path) -> None:
    from pathlib import Path

    Path(path).write_text(ground_truth_text(), encoding="utf-8")
