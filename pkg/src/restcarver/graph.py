"""The API graph: a rooted DAG of URI path segments built from observed API calls."""

from __future__ import annotations

from typing import NamedTuple

from .model import ApiCall, CallOrigin, parse_path
from .similarity import PayloadError, compare_responses, key_tree


class Payload(NamedTuple):
    body: bytes
    mime: str | None


class PathSegment:
    """One URI segment node.

    Attributes mirror the segment tuple: ``n`` segment string, ``d`` index in
    the URI, ``p`` parent path string, ``e`` endpoint flag, ``l`` response
    payload for endpoints, ``v`` inferred path-parameter variable name.
    """

    __slots__ = ("n", "d", "p", "e", "l", "v", "aliases")

    def __init__(self, n: str, d: int, p: str, e: bool = False, l: Payload | None = None):
        self.n = n
        self.d = d
        self.p = p
        self.e = e
        self.l = l
        self.v: str | None = None
        self.aliases: set[str] = {n}

    @property
    def path(self) -> str:
        """Concrete root path of this node, e.g. "/users/user1"."""
        return f"{self.p}/{self.n}"

    def __repr__(self):
        flags = "".join(ch for ch, on in (("e", self.e), ("v", self.v is not None)) if on)
        return f"<PathSegment {self.path} d={self.d}{' ' + flags if flags else ''}>"


def are_equal(s1: PathSegment, s2: PathSegment, tau: float = 0.0) -> bool:
    """Segment equivalence: name+index must match; differing parents unify only
    when both segments are endpoints with structurally equal responses."""
    if s1.n != s2.n or s1.d != s2.d:
        return False
    if s1.p == s2.p:
        return True
    if s1.e and s2.e:
        return compare_responses(s1.l, s2.l, tau)
    return False


class GraphPath(NamedTuple):
    segments: tuple[PathSegment, ...]

    def render(self) -> str:
        return "/" + "/".join(s.n for s in self.segments)


class ApiGraph:
    """Rooted DAG of path segments; complete root-to-endpoint paths are URIs."""

    def __init__(self, base_url: str = "", tau: float = 0.0):
        self.base_url = base_url.rstrip("/")
        self.tau = tau
        self.root = PathSegment("", -1, "", e=False)
        self.nodes: list[PathSegment] = []
        self._children: dict[int, list[PathSegment]] = {id(self.root): []}
        self._parents: dict[int, list[PathSegment]] = {}
        self.endpoint_calls: dict[int, list[ApiCall]] = {}
        self.var_count = 0

    # -- structure ---------------------------------------------------------

    def children(self, node: PathSegment) -> list[PathSegment]:
        return self._children.get(id(node), [])

    def parents(self, node: PathSegment) -> list[PathSegment]:
        return self._parents.get(id(node), [])

    def calls_at(self, node: PathSegment) -> list[ApiCall]:
        return self.endpoint_calls.get(id(node), [])

    def edges(self):
        yield from ((self.root, c) for c in self.children(self.root))
        for node in self.nodes:
            for child in self.children(node):
                yield node, child

    def edge_count(self) -> int:
        return sum(1 for _ in self.edges())

    def _add_node(self, node: PathSegment):
        self.nodes.append(node)
        self._children[id(node)] = []
        self._parents[id(node)] = []

    def _add_edge(self, parent: PathSegment, child: PathSegment):
        siblings = self._children.setdefault(id(parent), [])
        if child not in siblings:
            siblings.append(child)
        ups = self._parents.setdefault(id(child), [])
        if parent not in ups:
            ups.append(parent)

    def next_var(self) -> str:
        name = f"var{self.var_count}"
        self.var_count += 1
        return name

    # -- construction ------------------------------------------------------

    def _record_endpoint(self, node: PathSegment, call: ApiCall):
        self.endpoint_calls.setdefault(id(node), []).append(call)
        if node.l is None:
            payload = _response_payload(call)
            if payload is not None and _parses(payload):
                node.l = payload

    def insert_call(self, call: ApiCall):
        segments = parse_path(call.request.url, self.base_url)
        parent = self.root
        for i, name in enumerate(segments):
            parent_path = "" if i == 0 else "/" + "/".join(segments[:i])
            endpoint = i == len(segments) - 1
            candidate = PathSegment(name, i, parent_path, e=endpoint,
                                    l=_response_payload(call) if endpoint else None)
            match = None
            for existing in self.nodes:
                if are_equal(candidate, existing, self.tau):
                    match = existing
                    break
            if match is not None:
                self._add_edge(parent, match)
                if endpoint:
                    match.e = True
                    match.aliases.add(name)
                    self._record_endpoint(match, call)
                parent = match
            else:
                self._add_node(candidate)
                self._add_edge(parent, candidate)
                if endpoint:
                    self._record_endpoint(candidate, call)
                parent = candidate

    # -- queries -----------------------------------------------------------

    def endpoints(self) -> list[PathSegment]:
        return [n for n in self.nodes if n.e]

    def find_node(self, segments: list[str]) -> PathSegment | None:
        """Walk from the root matching concrete segment names (aliases included)."""
        node = self.root
        for name in segments:
            node = next((c for c in self.children(node) if name in c.aliases), None)
            if node is None:
                return None
        return None if node is self.root else node

    def to_dot(self) -> str:
        """DOT rendering for debugging.

        Endpoints are double circles; fill marks response provenance (gray =
        recorded, green = discovered by probing, white = none); parameterized
        nodes are dashed.
        """
        lines = ["digraph apigraph {", '  root [label="/", shape=point];']
        names = {id(self.root): "root"}
        for i, node in enumerate(self.nodes):
            names[id(node)] = f"n{i}"
            shape = "doublecircle" if node.e else "circle"
            origins = {c.origin for c in self.calls_at(node)}
            if CallOrigin.RECORDED in origins:
                color = "gray80"
            elif origins:
                color = "palegreen"
            else:
                color = "white"
            style = "filled,dashed" if node.v else "filled"
            label = node.n + (f" {{{node.v}}}" if node.v else "")
            lines.append(
                f'  n{i} [label="{label}", shape={shape}, style="{style}", '
                f'fillcolor={color}];'
            )
        for parent, child in self.edges():
            lines.append(f"  {names[id(parent)]} -> {names[id(child)]};")
        lines.append("}")
        return "\n".join(lines)


def _response_payload(call: ApiCall) -> Payload | None:
    body = call.response.body
    if not body:
        return None
    return Payload(body, call.response.body_mime)


def _parses(payload: Payload) -> bool:
    try:
        key_tree(payload.body, payload.mime or "")
        return True
    except PayloadError:
        return False


def build_api_graph(apiset, base_url: str = "", existing: ApiGraph | None = None,
                    tau: float = 0.0) -> ApiGraph:
    """Insert every call's URI into the graph, reusing equivalent segments.

    With ``existing`` given, insertion extends that graph in place, which is
    how successful probes expand a previously built graph.
    """
    graph = existing if existing is not None else ApiGraph(base_url, tau)
    for call in apiset:
        graph.insert_call(call)
    return graph


def join_nodes(graph: ApiGraph) -> list[PathSegment]:
    """Nodes with more than one predecessor, ordered by depth then name."""
    joins = [n for n in graph.nodes if len(graph.parents(n)) > 1]
    return sorted(joins, key=lambda n: (n.d, n.n, n.p))


def intermediate_nodes(graph: ApiGraph) -> list[PathSegment]:
    """Non-root nodes that never terminated a call (no associated response)."""
    return [n for n in graph.nodes if not n.e]


def complete_paths(graph: ApiGraph) -> list[GraphPath]:
    """Every root-to-endpoint path, in deterministic traversal order."""
    paths: list[GraphPath] = []

    def walk(node: PathSegment, trail: tuple[PathSegment, ...]):
        for child in graph.children(node):
            extended = trail + (child,)
            if child.e:
                paths.append(GraphPath(extended))
            walk(child, extended)

    walk(graph.root, ())
    return paths
