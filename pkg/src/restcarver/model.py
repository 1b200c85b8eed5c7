"""Core traffic-level types: HTTP requests/responses, API calls and call sequences."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from urllib.parse import urlsplit, unquote

HTTP_METHODS = (
    "GET",
    "POST",
    "PUT",
    "PATCH",
    "DELETE",
    "OPTIONS",
    "HEAD",
    "TRACE",
    "CONNECT",
)

MUTATING_METHODS = frozenset({"POST", "PUT", "PATCH", "DELETE"})


class MalformedUrlError(ValueError):
    """Raised when a URL string cannot be parsed or does not belong to the base URL."""


class CallOrigin(enum.Enum):
    RECORDED = "recorded"
    PROBE = "probe"


def _first_header(headers, name):
    lname = name.lower()
    for hname, value in headers:
        if hname.lower() == lname:
            return value
    return None


def _all_headers(headers, name):
    lname = name.lower()
    return [value for hname, value in headers if hname.lower() == lname]


@dataclass(frozen=True)
class HttpRequest:
    method: str
    url: str
    headers: tuple[tuple[str, str], ...] = ()
    body: bytes | None = None
    body_mime: str | None = None

    def header(self, name: str) -> str | None:
        return _first_header(self.headers, name)

    def headers_named(self, name: str) -> list[str]:
        return _all_headers(self.headers, name)

    @property
    def path(self) -> str:
        return urlsplit(self.url).path

    @property
    def query(self) -> str:
        return urlsplit(self.url).query


@dataclass(frozen=True)
class HttpResponse:
    status: int
    headers: tuple[tuple[str, str], ...] = ()
    body: bytes | None = None
    body_mime: str | None = None

    def header(self, name: str) -> str | None:
        return _first_header(self.headers, name)

    def headers_named(self, name: str) -> list[str]:
        return _all_headers(self.headers, name)


@dataclass(frozen=True)
class ApiCall:
    request: HttpRequest
    response: HttpResponse
    sequence_index: int = 0
    origin: CallOrigin = CallOrigin.RECORDED

    def with_index(self, index: int) -> "ApiCall":
        return replace(self, sequence_index=index)


@dataclass(frozen=True)
class ApiSequence:
    base_url: str
    calls: tuple[ApiCall, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "base_url", self.base_url.rstrip("/"))
        object.__setattr__(self, "calls", tuple(self.calls))

    def reindexed(self) -> "ApiSequence":
        """Return a copy with sequence_index reassigned to 0..n-1 in list order."""
        calls = tuple(c.with_index(i) for i, c in enumerate(self.calls))
        return ApiSequence(self.base_url, calls)


def canonical_mime(raw: str | None) -> str:
    """Normalize a MIME string: lowercase, parameters (charset etc.) stripped."""
    if raw is None:
        return ""
    media_type = raw.split(";", 1)[0].strip().lower()
    return media_type if media_type else raw.strip().lower()


def split_base_url(base_url: str) -> tuple[str, str]:
    """Split a base URL into (origin, base path), both without trailing slash."""
    parts = urlsplit(base_url)
    if not parts.scheme or not parts.netloc:
        raise MalformedUrlError(f"base URL must be absolute: {base_url!r}")
    origin = f"{parts.scheme}://{parts.netloc}"
    return origin, parts.path.rstrip("/")


def url_under_base(url: str, base_url: str) -> bool:
    """True when url falls under base_url at a path-segment boundary."""
    base = base_url.rstrip("/")
    if not url.startswith(base):
        return False
    rest = url[len(base):]
    return rest == "" or rest[0] in "/?#"


def parse_path(url: str, base_url: str = "") -> list[str]:
    """Split the path of ``url`` into segments, excluding the base_url prefix.

    Empty segments and trailing slashes are dropped; the query string and
    fragment never contribute segments; each segment is percent-decoded once.
    """
    try:
        parts = urlsplit(url)
    except ValueError as exc:
        raise MalformedUrlError(f"cannot parse URL {url!r}: {exc}") from None
    if parts.scheme and not parts.netloc:
        raise MalformedUrlError(f"absolute URL without authority: {url!r}")
    if not parts.scheme and not url.startswith("/"):
        raise MalformedUrlError(f"URL is neither absolute nor path-absolute: {url!r}")

    path = parts.path
    if base_url:
        base = base_url.rstrip("/")
        if parts.scheme:
            if not url_under_base(url, base):
                raise MalformedUrlError(f"URL {url!r} is not under base {base!r}")
            _, base_path = split_base_url(base)
        else:
            # path-absolute URL against the base's path component
            base_path = urlsplit(base).path.rstrip("/") if "://" not in base else split_base_url(base)[1]
            if base_path and not (path == base_path or path.startswith(base_path + "/")):
                raise MalformedUrlError(f"path {path!r} is not under base path {base_path!r}")
        if base_path:
            path = path[len(base_path):]
    return [unquote(seg) for seg in path.split("/") if seg]


def join_path(segments) -> str:
    """Inverse of parse_path for a segment list: "/"-joined, rooted."""
    return "/" + "/".join(segments)
