"""Directed API probing: probe generation, scheduling, execution, graph expansion."""

from __future__ import annotations

import enum
import json
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from urllib.parse import quote

from .executor import CookieStore, TransportError, execute
from .graph import ApiGraph, build_api_graph, intermediate_nodes, join_nodes
from .model import (
    MUTATING_METHODS,
    ApiCall,
    ApiSequence,
    CallOrigin,
    HttpRequest,
    HttpResponse,
    canonical_mime,
    parse_path,
)

PROBE_METHODS = ("GET", "POST", "PUT", "PATCH", "OPTIONS", "HEAD", "DELETE")

RESPONSE_TOKEN_DEPTH = 2
RESPONSE_TOKEN_CAP = 64


class Strategy(enum.Enum):
    INTERMEDIATE = "intermediate"
    BIPARTITE = "bipartite"
    RESPONSE = "response"
    OPERATION = "operation"


ALL_STRATEGIES = (
    Strategy.INTERMEDIATE,
    Strategy.BIPARTITE,
    Strategy.RESPONSE,
    Strategy.OPERATION,
)


@dataclass
class Probe:
    request: HttpRequest
    strategy: Strategy
    schedule_slots: list[int] = field(default_factory=list)
    attempts: list[tuple[int, HttpResponse | None]] = field(default_factory=list)

    def successful_attempts(self):
        return [
            (slot, resp) for slot, resp in self.attempts
            if resp is not None and not 400 <= resp.status <= 599
        ]


COOKIE = "cookie"
OPERATION = "operation"


@dataclass(frozen=True)
class Checkpoint:
    index: int
    kind: str  # COOKIE or OPERATION


@dataclass
class ProbeBudget:
    max_probes_executed: int | None = None
    max_wall_time: float | None = None  # seconds
    stages_enabled: tuple[Strategy, ...] = ALL_STRATEGIES
    unsafe_methods: bool = True


@dataclass
class StageStats:
    generated: int = 0
    executed: int = 0
    succeeded: int = 0


def find_checkpoints(seq: ApiSequence) -> list[Checkpoint]:
    """Calls that can change server-side state: cookie-setting responses take
    precedence over mutating methods when both apply."""
    checkpoints = []
    for i, call in enumerate(seq.calls):
        if call.response.headers_named("Set-Cookie"):
            checkpoints.append(Checkpoint(i, COOKIE))
        elif call.request.method in MUTATING_METHODS:
            checkpoints.append(Checkpoint(i, OPERATION))
    return checkpoints


def _concrete_path(graph: ApiGraph, node) -> str:
    calls = graph.calls_at(node)
    if calls:
        return "/" + "/".join(parse_path(calls[0].request.url, graph.base_url))
    return node.path


def _get_probe(graph: ApiGraph, path: str, strategy: Strategy) -> Probe:
    return Probe(HttpRequest("GET", graph.base_url + path), strategy)


def gen_intermediate(graph: ApiGraph) -> list[Probe]:
    """One GET probe per node without an associated response."""
    return [
        _get_probe(graph, node.path, Strategy.INTERMEDIATE)
        for node in intermediate_nodes(graph)
    ]


def gen_bipartite(graph: ApiGraph) -> list[Probe]:
    """Probes for edges missing from the bipartite neighborhood of each join
    node: predecessors on the left, the union of their successors on the right."""
    probes = []
    seen = set()
    for join in join_nodes(graph):
        left = graph.parents(join)
        right = []
        for pred in left:
            for succ in graph.children(pred):
                if succ not in right:
                    right.append(succ)
        for pred in left:
            existing = graph.children(pred)
            for succ in right:
                if succ in existing:
                    continue
                path = f"{pred.path}/{succ.n}"
                if path in seen:
                    continue
                seen.add(path)
                probes.append(_get_probe(graph, path, Strategy.BIPARTITE))
    return probes


def _scalar_token(value) -> str | None:
    if value is None or isinstance(value, (dict, list)):
        return None
    if isinstance(value, bool):
        return "true" if value else "false"
    token = str(value)
    return token if token else None


def _json_tokens(value, depth: int, out: list[str]):
    if depth > RESPONSE_TOKEN_DEPTH:
        return
    if isinstance(value, dict):
        for key, child in value.items():
            if depth + 1 <= RESPONSE_TOKEN_DEPTH:
                out.append(str(key))
            _json_tokens(child, depth + 1, out)
    elif isinstance(value, list):
        for child in value:
            _json_tokens(child, depth + 1, out)
    else:
        token = _scalar_token(value)
        if token is not None:
            out.append(token)


def _xml_tokens(elem, depth: int, out: list[str]):
    if depth > RESPONSE_TOKEN_DEPTH:
        return
    out.append(elem.tag if isinstance(elem.tag, str) else str(elem.tag))
    if elem.text and elem.text.strip() and depth + 1 <= RESPONSE_TOKEN_DEPTH:
        out.append(elem.text.strip())
    for child in elem:
        _xml_tokens(child, depth + 1, out)


def response_tokens(body: bytes, mime: str | None) -> list[str]:
    """Keys and scalar values extracted from a payload, to bounded depth,
    deduplicated in first-seen order."""
    media = canonical_mime(mime)
    text = body.decode("utf-8", "replace")
    tokens: list[str] = []
    if media.endswith("xml") or media.endswith("+xml"):
        try:
            _xml_tokens(ET.fromstring(text), 0, tokens)
        except ET.ParseError:
            return []
    else:
        try:
            _json_tokens(json.loads(text), 0, tokens)
        except ValueError:
            return []
    return list(dict.fromkeys(tokens))[:RESPONSE_TOKEN_CAP]


def gen_response(graph: ApiGraph) -> list[Probe]:
    """Probes built from keys and values of endpoint responses, one path
    segment deeper than the endpoint they came from."""
    probes = []
    seen = set()
    for node in graph.nodes:
        if not node.e or node.l is None:
            continue
        base_path = _concrete_path(graph, node)
        base_segments = [s for s in base_path.split("/") if s]
        for token in response_tokens(node.l.body, node.l.mime):
            target = graph.find_node(base_segments + [token])
            if target is not None and target.e:
                continue  # URI already answered by a known endpoint
            path = f"{base_path}/{quote(token, safe='')}"
            if path in seen:
                continue
            seen.add(path)
            probes.append(_get_probe(graph, path, Strategy.RESPONSE))
    return probes


def gen_operation(graph: ApiGraph, budget: ProbeBudget | None = None) -> list[Probe]:
    """Per known endpoint, one probe for each HTTP operation not yet observed
    there. Mutating probes reuse a recorded sibling payload when one exists,
    else send an empty JSON object; they are suppressed entirely when
    unsafe_methods is off."""
    budget = budget or ProbeBudget()
    probes = []
    for node in graph.nodes:
        if not node.e:
            continue
        calls = graph.calls_at(node)
        observed = {c.request.method.upper() for c in calls}
        sibling_body = next(
            ((c.request.body, c.request.body_mime) for c in calls if c.request.body),
            None,
        )
        path = _concrete_path(graph, node)
        for method in PROBE_METHODS:
            if method in observed:
                continue
            if not budget.unsafe_methods and method in MUTATING_METHODS:
                continue
            body = None
            mime = None
            if method in ("POST", "PUT", "PATCH"):
                body, mime = sibling_body if sibling_body else (b"{}", "application/json")
            headers = (("Content-Type", mime),) if mime else ()
            probes.append(Probe(
                HttpRequest(method, graph.base_url + path, headers, body, mime),
                Strategy.OPERATION,
            ))
    return probes


def schedule(probe: Probe, seq: ApiSequence, graph: ApiGraph, checkpoints) -> list[int]:
    """Slot assignment: probes for URIs already in the graph run once, before
    the last original call that includes the node; probes for unknown URIs run
    once before the first checkpoint and once after every checkpoint."""
    segments = parse_path(probe.request.url, seq.base_url)
    node = graph.find_node(segments)
    if node is not None:
        last = None
        for i, call in enumerate(seq.calls):
            try:
                call_segments = parse_path(call.request.url, seq.base_url)
            except ValueError:
                continue
            if call_segments[: len(segments)] == segments:
                last = i
        if last is not None:
            return [last]
    if not checkpoints:
        return [0]
    slots = [checkpoints[0].index]
    slots.extend(cp.index + 1 for cp in checkpoints)
    return sorted(set(slots))


class _ExecState:
    def __init__(self, budget: ProbeBudget):
        self.budget = budget
        self.executed = 0
        self.deadline = (
            time.monotonic() + budget.max_wall_time
            if budget.max_wall_time is not None else None
        )
        self.exhausted = False

    def can_execute(self) -> bool:
        if self.budget.max_probes_executed is not None and \
                self.executed >= self.budget.max_probes_executed:
            self.exhausted = True
        if self.deadline is not None and time.monotonic() >= self.deadline:
            self.exhausted = True
        return not self.exhausted


def _send_probe(probe: Probe, slot: int, base_url: str, target: str,
                cookies: CookieStore, timeout: float):
    url = target.rstrip("/") + probe.request.url[len(base_url):]
    request = HttpRequest(probe.request.method, url, probe.request.headers,
                          probe.request.body, probe.request.body_mime)
    try:
        response = execute(request, cookies, timeout)
    except TransportError:
        response = None
    probe.attempts.append((slot, response))
    return response


def execute_stage(seq: ApiSequence, probes: list[Probe], budget: ProbeBudget,
                  target: str, state: _ExecState | None = None,
                  timeout: float = 10.0) -> tuple[list[tuple[int, ApiCall]], StageStats]:
    """Replay the sequence against the target, injecting every probe at its
    slots. Returns retained successes as (slot, call) pairs: one instance per
    probe, at its earliest successful slot."""
    state = state or _ExecState(budget)
    stats = StageStats(generated=len(probes))
    by_slot: dict[int, list[Probe]] = {}
    for probe in probes:
        for slot in probe.schedule_slots:
            by_slot.setdefault(slot, []).append(probe)

    cookies = CookieStore()
    for i in range(len(seq.calls) + 1):
        for probe in by_slot.get(i, ()):
            if not state.can_execute():
                break
            state.executed += 1
            stats.executed += 1
            _send_probe(probe, i, seq.base_url, target, cookies, timeout)
        if i < len(seq.calls):
            _replay_original(seq.calls[i], seq.base_url, target, cookies, timeout)

    retained: list[tuple[int, ApiCall]] = []
    for probe in probes:
        successes = probe.successful_attempts()
        if not successes:
            continue
        stats.succeeded += 1
        slot, response = successes[0]
        retained.append((slot, ApiCall(probe.request, response, origin=CallOrigin.PROBE)))
    return retained, stats


def _replay_original(call: ApiCall, base_url: str, target: str,
                     cookies: CookieStore, timeout: float):
    url = target.rstrip("/") + call.request.url[len(base_url.rstrip("/")):]
    request = HttpRequest(call.request.method, url, call.request.headers,
                          call.request.body, call.request.body_mime)
    try:
        execute(request, cookies, timeout)
    except TransportError:
        pass


def _insert_at_slots(seq: ApiSequence, retained: list[tuple[int, ApiCall]]) -> ApiSequence:
    calls: list[ApiCall] = []
    for i in range(len(seq.calls) + 1):
        calls.extend(call for slot, call in retained if slot == i)
        if i < len(seq.calls):
            calls.append(seq.calls[i])
    return ApiSequence(seq.base_url, calls).reindexed()


_GENERATORS = {
    Strategy.INTERMEDIATE: lambda g, b: gen_intermediate(g),
    Strategy.BIPARTITE: lambda g, b: gen_bipartite(g),
    Strategy.RESPONSE: lambda g, b: gen_response(g),
    Strategy.OPERATION: gen_operation,
}


@dataclass
class ExpandResult:
    graph: ApiGraph
    sequence: ApiSequence
    stats: dict[str, StageStats]
    passes: int = 0
    budget_exhausted: bool = False
    probes: list[Probe] = field(default_factory=list)


def expand(seq: ApiSequence, graph: ApiGraph, budget: ProbeBudget | None = None,
           target: str | None = None, timeout: float = 10.0) -> ExpandResult:
    """Run probing stages in order, inserting successful probes into the graph
    and sequence after each stage, until a full pass adds nothing or the budget
    runs out."""
    budget = budget or ProbeBudget()
    target = target or seq.base_url
    state = _ExecState(budget)
    stats = {s.value: StageStats() for s in ALL_STRATEGIES}
    attempted: set[tuple[str, str]] = set()
    augmented = seq
    result = ExpandResult(graph=graph, sequence=augmented, stats=stats)

    while True:
        result.passes += 1
        progress = False
        for strategy in ALL_STRATEGIES:
            if strategy not in budget.stages_enabled:
                continue
            if not state.can_execute():
                break
            probes = [
                p for p in _GENERATORS[strategy](graph, budget)
                if (p.request.method, p.request.url) not in attempted
            ]
            if not probes:
                continue
            checkpoints = find_checkpoints(augmented)
            for probe in probes:
                probe.schedule_slots = schedule(probe, augmented, graph, checkpoints)
            retained, stage_stats = execute_stage(
                augmented, probes, budget, target, state, timeout
            )
            attempted.update(
                (p.request.method, p.request.url) for p in probes if p.attempts
            )
            bucket = stats[strategy.value]
            bucket.generated += stage_stats.generated
            bucket.executed += stage_stats.executed
            bucket.succeeded += stage_stats.succeeded
            result.probes.extend(probes)
            if retained:
                build_api_graph([call for _, call in retained], existing=graph)
                augmented = _insert_at_slots(augmented, retained)
                progress = True
        if state.exhausted or not progress:
            break

    result.sequence = augmented
    result.budget_exhausted = state.exhausted
    return result
