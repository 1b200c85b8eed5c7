"""Configurable filter pipeline that drops API calls irrelevant for carving."""

from __future__ import annotations

import fnmatch
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .model import MUTATING_METHODS, ApiCall, ApiSequence, canonical_mime

OPERATION = "operation"
STATUS = "status"
MIME = "mime"
URL_DENY = "url_deny"

DEFAULT_FILTERS = (OPERATION, STATUS, MIME)

_JSON_XML_MIMES = frozenset({"text/json", "text/xml", "application/json", "application/xml"})


@dataclass
class FilterConfig:
    enabled_filters: tuple[str, ...] = DEFAULT_FILTERS
    extra_mime_allow: frozenset[str] = frozenset()
    url_deny_patterns: tuple[str, ...] = ()
    # (name, predicate) pairs; a call any predicate accepts bypasses all drops
    keep_predicates: tuple[tuple[str, Callable[[ApiCall], bool]], ...] = ()


@dataclass
class FilterReport:
    recorded_count: int = 0
    kept_count: int = 0
    dropped_by_filter: dict[str, int] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "recorded_count": self.recorded_count,
            "kept_count": self.kept_count,
            "dropped_by_filter": dict(self.dropped_by_filter),
        }


def operation_filter(call: ApiCall) -> bool:
    """Keep unless the HTTP method is unrelated to resource manipulation."""
    return call.request.method not in ("TRACE", "CONNECT")


def status_filter(call: ApiCall) -> bool:
    """Keep unless the response indicates an unsuccessful request (4xx/5xx)."""
    return not 400 <= call.response.status <= 599


def mime_filter(call: ApiCall, cfg: FilterConfig | None = None) -> bool:
    """Keep calls whose response payload carries JSON or XML data.

    Empty-bodied responses survive only for mutating methods, which manipulate
    resources without necessarily returning a representation.
    """
    if not call.response.body:
        return call.request.method in MUTATING_METHODS
    mime = canonical_mime(call.response.body_mime)
    if mime in _JSON_XML_MIMES or mime.endswith("+json") or mime.endswith("+xml"):
        return True
    return cfg is not None and mime in cfg.extra_mime_allow


def url_deny_filter(call: ApiCall, cfg: FilterConfig) -> bool:
    return not any(fnmatch.fnmatch(call.request.url, pat) for pat in cfg.url_deny_patterns)


def run_pipeline(seq: ApiSequence, cfg: FilterConfig | None = None) -> tuple[ApiSequence, FilterReport]:
    """Apply the configured filters in order; the first filter to fire is
    charged with the drop. Relative order of kept calls is preserved."""
    cfg = cfg or FilterConfig()
    report = FilterReport(recorded_count=len(seq.calls))
    stages: list[tuple[str, Callable[[ApiCall], bool]]] = []
    if cfg.url_deny_patterns:
        stages.append((URL_DENY, lambda c: url_deny_filter(c, cfg)))
    for name in cfg.enabled_filters:
        if name == OPERATION:
            stages.append((OPERATION, operation_filter))
        elif name == STATUS:
            stages.append((STATUS, status_filter))
        elif name == MIME:
            stages.append((MIME, lambda c: mime_filter(c, cfg)))
        else:
            raise ValueError(f"unknown filter: {name!r}")

    kept = []
    for call in seq.calls:
        if any(pred(call) for _, pred in cfg.keep_predicates):
            kept.append(call)
            continue
        verdict = None
        for name, keep in stages:
            if not keep(call):
                verdict = name
                break
        if verdict is None:
            kept.append(call)
        else:
            report.dropped_by_filter[verdict] = report.dropped_by_filter.get(verdict, 0) + 1
    report.kept_count = len(kept)
    filtered = ApiSequence(seq.base_url, kept).reindexed()
    return filtered, report


def load_filter_config(path: str | Path) -> FilterConfig:
    """Load a FilterConfig from a TOML or JSON file (keys mirror the fields)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        data = json.loads(text)
    else:
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        data = tomllib.loads(text)
    data = data.get("filter", data)
    return FilterConfig(
        enabled_filters=tuple(data.get("enabled_filters", DEFAULT_FILTERS)),
        extra_mime_allow=frozenset(data.get("extra_mime_allow", ())),
        url_deny_patterns=tuple(data.get("url_deny_patterns", ())),
    )
