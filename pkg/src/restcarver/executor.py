"""Sequential HTTP execution with a cookie store honoring Max-Age/Expires."""

from __future__ import annotations

import http.client
import re
import time
from dataclasses import dataclass
from email.utils import parsedate_to_datetime
from http.cookies import SimpleCookie
from urllib.parse import urlsplit

from .model import HttpRequest, HttpResponse

PLACEHOLDER_RE = re.compile(r"\{\{cookie:([^}]+)\}\}")

# Never forwarded when replaying or proxying (RFC 7230 hop-by-hop set).
HOP_BY_HOP = frozenset({
    "connection", "keep-alive", "proxy-authenticate", "proxy-authorization",
    "te", "trailer", "transfer-encoding", "upgrade", "proxy-connection",
})


class TransportError(Exception):
    """Network-level failure talking to the target."""


class MissingCookieError(KeyError):
    """A {{cookie:name}} placeholder had no live value in the store."""


@dataclass
class _StoredCookie:
    value: str
    expires_at: float | None = None  # monotonic-free wall clock, None = session


class CookieStore:
    """Cookies observed from Set-Cookie headers, with expiry semantics."""

    def __init__(self):
        self._jar: dict[str, _StoredCookie] = {}

    def update(self, set_cookie_values, now: float | None = None):
        now = time.time() if now is None else now
        for raw in set_cookie_values:
            cookie = SimpleCookie()
            try:
                cookie.load(raw)
            except Exception:
                continue
            for name, morsel in cookie.items():
                expires_at = None
                if morsel["max-age"]:
                    try:
                        expires_at = now + int(morsel["max-age"])
                    except ValueError:
                        pass
                elif morsel["expires"]:
                    try:
                        expires_at = parsedate_to_datetime(morsel["expires"]).timestamp()
                    except (TypeError, ValueError):
                        pass
                self._jar[name] = _StoredCookie(morsel.value, expires_at)

    def get(self, name: str, now: float | None = None) -> str | None:
        now = time.time() if now is None else now
        stored = self._jar.get(name)
        if stored is None:
            return None
        if stored.expires_at is not None and stored.expires_at <= now:
            del self._jar[name]
            return None
        return stored.value

    def names(self, now: float | None = None) -> list[str]:
        return [name for name in list(self._jar) if self.get(name, now) is not None]

    def header_value(self, now: float | None = None) -> str | None:
        pairs = [f"{name}={self.get(name, now)}" for name in self.names(now)]
        return "; ".join(pairs) if pairs else None

    def resolve(self, text: str, now: float | None = None) -> str:
        """Substitute {{cookie:name}} placeholders; missing cookies raise."""

        def sub(match):
            value = self.get(match.group(1), now)
            if value is None:
                raise MissingCookieError(match.group(1))
            return value

        return PLACEHOLDER_RE.sub(sub, text)


def send_request(method: str, url: str, headers=(), body: bytes | None = None,
                 timeout: float = 10.0) -> HttpResponse:
    """One HTTP exchange over a fresh connection; hop-by-hop headers stripped."""
    parts = urlsplit(url)
    if parts.scheme == "https":
        conn = http.client.HTTPSConnection(parts.netloc, timeout=timeout)
    else:
        conn = http.client.HTTPConnection(parts.netloc, timeout=timeout)
    selector = parts.path or "/"
    if parts.query:
        selector += "?" + parts.query
    try:
        conn.putrequest(method, selector, skip_host=True, skip_accept_encoding=True)
        # Host always names the actual target so recorded traffic replays
        # cleanly against a different instance
        conn.putheader("Host", parts.netloc)
        for name, value in headers:
            lname = name.lower()
            if lname in HOP_BY_HOP or lname in ("content-length", "host"):
                continue
            conn.putheader(name, value)
        if body is not None:
            conn.putheader("Content-Length", str(len(body)))
        conn.endheaders(body)
        raw = conn.getresponse()
        resp_body = raw.read()
        resp_headers = tuple((k, v) for k, v in raw.getheaders())
    except (OSError, http.client.HTTPException) as exc:
        raise TransportError(f"{method} {url}: {exc}") from None
    finally:
        conn.close()
    mime = next((v for k, v in resp_headers if k.lower() == "content-type"), None)
    return HttpResponse(
        status=raw.status,
        headers=resp_headers,
        body=resp_body if resp_body else None,
        body_mime=mime,
    )


def execute(request: HttpRequest, cookies: CookieStore | None = None,
            timeout: float = 10.0) -> HttpResponse:
    """Send a request with live cookie handling.

    Any recorded Cookie header is replaced by the store's current cookies;
    Set-Cookie headers on the response update the store.
    """
    headers = [(n, v) for n, v in request.headers if n.lower() != "cookie"]
    if cookies is not None:
        header_value = cookies.header_value()
        if header_value:
            headers.append(("Cookie", header_value))
    response = send_request(request.method, request.url, headers, request.body, timeout)
    if cookies is not None:
        cookies.update(response.headers_named("Set-Cookie"))
    return response
