"""Load recorded traffic from HAR 1.2 files or recorder JSONL logs into an ApiSequence."""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from urllib.parse import urlsplit

from .model import ApiCall, ApiSequence, CallOrigin, HttpRequest, HttpResponse, url_under_base

HAR = "har"
JSONL = "jsonl"


class IngestError(ValueError):
    """Raised for unreadable recordings, with the offending entry identified."""


class EmptyRecordingError(IngestError):
    """Raised when no entries survive loading."""


class MixedOriginError(IngestError):
    """Raised when recorded URLs share no common scheme+authority."""


@dataclass(frozen=True)
class RecordingSource:
    kind: str  # HAR or JSONL
    path: str | Path
    base_url: str | None = None

    @classmethod
    def from_path(cls, path: str | Path, base_url: str | None = None) -> "RecordingSource":
        kind = HAR if str(path).lower().endswith(".har") else JSONL
        return cls(kind, path, base_url)


def _parse_ts(value: str) -> datetime:
    try:
        return datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError as exc:
        raise IngestError(f"bad timestamp {value!r}: {exc}") from None


def _header_pairs(raw) -> tuple[tuple[str, str], ...]:
    pairs = []
    for item in raw or ():
        if isinstance(item, dict):
            pairs.append((str(item.get("name", "")), str(item.get("value", ""))))
        else:
            name, value = item
            pairs.append((str(name), str(value)))
    return tuple(pairs)


def _b64(value) -> bytes | None:
    if value in (None, ""):
        return None
    return base64.b64decode(value)


def _read_har(path: Path) -> list[tuple[datetime | None, HttpRequest, HttpResponse]]:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IngestError(f"{path}: invalid JSON: {exc}") from None
    entries = doc.get("log", {}).get("entries")
    if entries is None:
        raise IngestError(f"{path}: not a HAR file (no log.entries)")
    out = []
    for i, entry in enumerate(entries):
        try:
            req = entry["request"]
            resp = entry["response"]
            post = req.get("postData") or {}
            body = post.get("text")
            request = HttpRequest(
                method=req["method"].upper(),
                url=req["url"],
                headers=_header_pairs(req.get("headers")),
                body=body.encode("utf-8") if body else None,
                body_mime=post.get("mimeType"),
            )
            content = resp.get("content") or {}
            text = content.get("text")
            if text is None:
                resp_body = None
            elif content.get("encoding") == "base64":
                resp_body = base64.b64decode(text)
            else:
                resp_body = text.encode("utf-8")
            response = HttpResponse(
                status=int(resp["status"]),
                headers=_header_pairs(resp.get("headers")),
                body=resp_body,
                body_mime=content.get("mimeType"),
            )
            ts = _parse_ts(entry["startedDateTime"]) if entry.get("startedDateTime") else None
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestError(f"{path}: entry {i}: {exc}") from None
        out.append((ts, request, response))
    return out


def _read_jsonl(path: Path) -> list[tuple[datetime | None, HttpRequest, HttpResponse]]:
    out = []
    lines = path.read_text(encoding="utf-8").split("\n")
    last_nonempty = max((i for i, line in enumerate(lines) if line.strip()), default=-1)
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            if i == last_nonempty:
                break  # torn final line from a crashed recorder is tolerated
            raise IngestError(f"{path}: line {i + 1}: invalid JSON: {exc}") from None
        try:
            request = HttpRequest(
                method=rec["method"].upper(),
                url=rec["url"],
                headers=_header_pairs(rec.get("req_headers")),
                body=_b64(rec.get("req_body_b64")),
                body_mime=rec.get("req_mime"),
            )
            response = HttpResponse(
                status=int(rec["status"]),
                headers=_header_pairs(rec.get("resp_headers")),
                body=_b64(rec.get("resp_body_b64")),
                body_mime=rec.get("resp_mime"),
            )
            ts = _parse_ts(rec["ts"]) if rec.get("ts") else None
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestError(f"{path}: line {i + 1}: {exc}") from None
        out.append((ts, request, response))
    return out


def autodetect_base_url(calls) -> str:
    """Longest common URL prefix over all calls, cut back to a "/" boundary.

    The result is never shorter than scheme + authority.
    """
    urls = [c.request.url for c in calls]
    if not urls:
        raise EmptyRecordingError("cannot detect a base URL from zero calls")
    origins = set()
    for url in urls:
        parts = urlsplit(url)
        origins.add((parts.scheme.lower(), parts.netloc.lower()))
    if len(origins) != 1:
        raise MixedOriginError(f"recorded URLs span multiple origins: {sorted(origins)}")
    first = urlsplit(urls[0])
    origin = f"{first.scheme}://{first.netloc}"
    prefix = urls[0]
    for url in urls[1:]:
        while not url.startswith(prefix):
            prefix = prefix[:-1]
    cut = prefix.rfind("/", len(origin))
    base = prefix[:cut] if cut != -1 else origin
    return base if len(base) >= len(origin) else origin


def load_recording(source: RecordingSource) -> tuple[ApiSequence, int]:
    """Load a recording; returns the sequence plus the count of entries dropped
    for falling outside the base URL."""
    path = Path(source.path)
    if not path.exists():
        raise IngestError(f"recording not found: {path}")
    if source.kind == HAR:
        entries = _read_har(path)
    elif source.kind == JSONL:
        entries = _read_jsonl(path)
    else:
        raise IngestError(f"unknown recording kind: {source.kind!r}")
    if not entries:
        raise EmptyRecordingError(f"{path}: recording has no entries")

    # stable sort: timestamped entries in time order, untimestamped keep file order
    timestamped = [e for e in entries if e[0] is not None]
    untimestamped = [e for e in entries if e[0] is None]
    entries = untimestamped + sorted(timestamped, key=lambda e: e[0])

    calls = [
        ApiCall(request=req, response=resp, origin=CallOrigin.RECORDED)
        for _, req, resp in entries
    ]
    base_url = source.base_url or autodetect_base_url(calls)
    kept = [c for c in calls if url_under_base(c.request.url, base_url)]
    dropped = len(calls) - len(kept)
    if not kept:
        raise EmptyRecordingError(f"{path}: no entries under base URL {base_url!r}")
    seq = ApiSequence(base_url, kept).reindexed()
    return seq, dropped


def load(source: RecordingSource) -> ApiSequence:
    """Load a recording into an ApiSequence (see load_recording for drop counts)."""
    return load_recording(source)[0]
