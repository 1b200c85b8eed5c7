"""Carved API test suites: the suite JSON format, emission, and sequential replay."""

from __future__ import annotations

import base64
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import urlsplit

from .executor import CookieStore, MissingCookieError, TransportError, send_request
from .model import ApiCall, ApiSequence, CallOrigin, HttpRequest, HttpResponse

SUITE_VERSION = 1


class SuiteFormatError(ValueError):
    """Raised when a suite file does not follow the expected shape."""


def _status_class(status: int) -> str:
    if 200 <= status < 300:
        return "2xx"
    if 300 <= status < 400:
        return "3xx"
    return "any"


def _placeholderize_cookie(value: str) -> str:
    pairs = []
    for chunk in value.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        name = chunk.split("=", 1)[0].strip()
        pairs.append(f"{name}={{{{cookie:{name}}}}}")
    return "; ".join(pairs)


def _b64(data: bytes | None) -> str | None:
    return base64.b64encode(data).decode("ascii") if data is not None else None


def _unb64(data: str | None) -> bytes | None:
    return base64.b64decode(data) if data is not None else None


def _relative(url: str, base_url: str) -> tuple[str, str]:
    parts = urlsplit(url)
    base_path = urlsplit(base_url).path.rstrip("/")
    path = parts.path
    if base_path and path.startswith(base_path):
        path = path[len(base_path):]
    return path or "/", parts.query


def _step_from_call(call: ApiCall, base_url: str, include_responses: bool) -> dict:
    path, query = _relative(call.request.url, base_url)
    headers = []
    for name, value in call.request.headers:
        # replay suites carry cookie placeholders; sequence files stay verbatim
        if name.lower() == "cookie" and not include_responses:
            value = _placeholderize_cookie(value)
        headers.append([name, value])
    step = {
        "method": call.request.method,
        "path": path,
        "query": query,
        "headers": headers,
        "body_b64": _b64(call.request.body),
        "expect": _status_class(call.response.status),
        "origin": call.origin.value,
    }
    if include_responses:
        step["req_mime"] = call.request.body_mime
        step["recorded_status"] = call.response.status
        step["resp_headers"] = [list(h) for h in call.response.headers]
        step["resp_mime"] = call.response.body_mime
        step["resp_body_b64"] = _b64(call.response.body)
    return step


def sequence_to_suite(seq: ApiSequence, split: str = "single", checkpoints=None,
                      include_responses: bool = False) -> dict:
    """Serialize a sequence as a suite document.

    ``split="per-checkpoint"`` starts a new test case after each checkpoint
    call (indices supplied by the caller); ``include_responses`` embeds the
    recorded responses so the file doubles as a sequence file for inference.
    """
    cases = []
    if split == "single":
        groups = [list(seq.calls)] if seq.calls else []
    elif split == "per-checkpoint":
        boundaries = sorted(set(checkpoints or ()))
        groups = []
        current: list[ApiCall] = []
        for i, call in enumerate(seq.calls):
            current.append(call)
            if i in boundaries:
                groups.append(current)
                current = []
        if current:
            groups.append(current)
    else:
        raise ValueError(f"unknown split mode: {split!r}")
    for i, group in enumerate(groups):
        cases.append({
            "name": f"case-{i + 1}",
            "steps": [_step_from_call(c, seq.base_url, include_responses) for c in group],
        })
    return {"version": SUITE_VERSION, "base_url": seq.base_url, "cases": cases}


def emit_suite(seq: ApiSequence, path: str | Path, split: str = "single",
               checkpoints=None, include_responses: bool = False) -> dict:
    doc = sequence_to_suite(seq, split, checkpoints, include_responses)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return doc


def parse_suite(doc) -> dict:
    """Validate a suite document (parsed JSON or text) and return it."""
    if isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    if not isinstance(doc, dict) or doc.get("version") != SUITE_VERSION:
        raise SuiteFormatError("not a version-1 suite document")
    if "base_url" not in doc or not isinstance(doc.get("cases"), list):
        raise SuiteFormatError("suite document must carry base_url and cases")
    return doc


def load_suite(path: str | Path) -> dict:
    return parse_suite(Path(path).read_text(encoding="utf-8"))


def suite_to_sequence(doc) -> ApiSequence:
    """Rebuild an ApiSequence from a suite emitted with recorded responses."""
    doc = parse_suite(doc)
    base_url = doc["base_url"]
    calls = []
    for case in doc["cases"]:
        for step in case["steps"]:
            if "recorded_status" not in step:
                raise SuiteFormatError(
                    "suite lacks recorded responses; re-emit the sequence file with responses"
                )
            url = base_url if step["path"] == "/" else base_url + step["path"]
            if step["query"]:
                url += "?" + step["query"]
            headers = [(name, value) for name, value in step["headers"]]
            request = HttpRequest(
                method=step["method"],
                url=url,
                headers=tuple(headers),
                body=_unb64(step.get("body_b64")),
                body_mime=step.get("req_mime"),
            )
            response = HttpResponse(
                status=step["recorded_status"],
                headers=tuple(tuple(h) for h in step.get("resp_headers", [])),
                body=_unb64(step.get("resp_body_b64")),
                body_mime=step.get("resp_mime"),
            )
            calls.append(ApiCall(request, response, origin=CallOrigin(step["origin"])))
    return ApiSequence(base_url, calls).reindexed()


@dataclass
class StepResult:
    name: str
    request_line: str
    status: int | None
    latency_ms: float
    verdict: str  # "pass" | "fail"
    detail: str = ""


@dataclass
class RunReport:
    total: int = 0
    passed: int = 0
    failed: int = 0
    wall_time: float = 0.0
    per_step: list[StepResult] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "passed": self.passed,
            "failed": self.failed,
            "wall_time_s": round(self.wall_time, 6),
            "steps": [
                {
                    "name": s.name,
                    "request": s.request_line,
                    "status": s.status,
                    "latency_ms": round(s.latency_ms, 3),
                    "verdict": s.verdict,
                    "detail": s.detail,
                }
                for s in self.per_step
            ],
        }


def _verdict(expect: str, status: int) -> bool:
    if expect == "2xx":
        return 200 <= status < 300
    if expect == "3xx":
        return 300 <= status < 400
    return True


def replay(doc, target: str | None = None, timeout: float = 10.0) -> RunReport:
    """Execute a suite strictly in order against ``target`` (default: the
    suite's own base_url), maintaining a live cookie store."""
    doc = parse_suite(doc)
    base = (target or doc["base_url"]).rstrip("/")
    cookies = CookieStore()
    report = RunReport()
    started = time.monotonic()
    for case in doc["cases"]:
        for i, step in enumerate(case["steps"]):
            name = f"{case['name']}/step-{i + 1}"
            url = base + step["path"]
            if step["query"]:
                url += "?" + step["query"]
            request_line = f"{step['method']} {url}"
            report.total += 1
            step_started = time.monotonic()
            try:
                headers = []
                for hname, hvalue in step["headers"]:
                    if hname.lower() == "cookie":
                        hvalue = cookies.resolve(hvalue)
                    headers.append((hname, hvalue))
                response = send_request(
                    step["method"], url, headers, _unb64(step.get("body_b64")), timeout
                )
            except MissingCookieError as exc:
                report.failed += 1
                report.per_step.append(StepResult(
                    name, request_line, None, _ms(step_started), "fail",
                    f"unresolved cookie placeholder: {exc.args[0]}",
                ))
                continue
            except TransportError as exc:
                report.failed += 1
                report.per_step.append(StepResult(
                    name, request_line, None, _ms(step_started), "fail", str(exc),
                ))
                continue
            cookies.update(response.headers_named("Set-Cookie"))
            ok = _verdict(step["expect"], response.status)
            if ok:
                report.passed += 1
            else:
                report.failed += 1
            report.per_step.append(StepResult(
                name, request_line, response.status, _ms(step_started),
                "pass" if ok else "fail",
                "" if ok else f"expected {step['expect']}, got {response.status}",
            ))
    report.wall_time = time.monotonic() - started
    return report


def _ms(started: float) -> float:
    return (time.monotonic() - started) * 1000.0
