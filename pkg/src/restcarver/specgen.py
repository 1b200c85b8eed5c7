"""URI template extraction and OpenAPI document generation from the API graph."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from urllib.parse import parse_qsl

import yaml

from .graph import ApiGraph, PathSegment
from .model import MUTATING_METHODS, canonical_mime
from .similarity import KeyTree, PayloadError, compare_responses, key_tree

_VAR_RE = re.compile(r"^\{([^{}/]+)\}$")

METHOD_ORDER = ("get", "post", "put", "patch", "delete", "options", "head", "trace")


@dataclass(frozen=True)
class Literal:
    text: str


@dataclass(frozen=True)
class Parameter:
    name: str
    examples: tuple[str, ...] = ()
    inferred_type: str = "string"  # "integer" | "string"


@dataclass(frozen=True)
class UriTemplate:
    segments: tuple[Literal | Parameter, ...]

    def render(self) -> str:
        if not self.segments:
            return "/"
        parts = [
            seg.text if isinstance(seg, Literal) else "{" + seg.name + "}"
            for seg in self.segments
        ]
        return "/" + "/".join(parts)

    def parameters(self) -> list[Parameter]:
        return [s for s in self.segments if isinstance(s, Parameter)]

    def matches_concrete(self, path: str) -> bool:
        """True when a concrete path is an expansion of this template."""
        concrete = [s for s in path.split("/") if s]
        if len(concrete) != len(self.segments):
            return False
        return all(
            isinstance(seg, Parameter) or seg.text == value
            for seg, value in zip(self.segments, concrete)
        )

    @classmethod
    def parse(cls, rendered: str) -> "UriTemplate":
        segments: list[Literal | Parameter] = []
        for part in rendered.split("/"):
            if not part:
                continue
            m = _VAR_RE.match(part)
            segments.append(Parameter(m.group(1)) if m else Literal(part))
        return cls(tuple(segments))


@dataclass
class ResponseSpec:
    status: int
    mime: str
    schema: KeyTree | None = None
    example: bytes | None = None


@dataclass
class OperationSpec:
    method: str
    path_params: list[Parameter] = field(default_factory=list)
    query_params: list[Parameter] = field(default_factory=list)
    header_params: list[str] = field(default_factory=list)
    request_mime: str | None = None
    request_schema: KeyTree | None = None
    request_example: bytes | None = None
    responses: dict[int, ResponseSpec] = field(default_factory=dict)


@dataclass
class SpecDocument:
    title: str
    server_url: str
    path_items: dict[str, dict[str, OperationSpec]] = field(default_factory=dict)
    templates: dict[str, UriTemplate] = field(default_factory=dict)

    def paths(self) -> list[str]:
        return sorted(self.path_items)

    def operations(self) -> list[tuple[str, str]]:
        return [(p, m) for p in self.paths() for m in sorted(self.path_items[p])]


def merge_leaf_nodes(graph: ApiGraph, tau: float | None = None) -> ApiGraph:
    """Assign shared path-parameter variables to endpoint nodes with matching
    responses.

    Candidates are endpoints occupying the same position (same depth, same
    parent node); variable assignment is the transitive closure of pairwise
    response matches, named var0, var1, ... in discovery order.
    """
    tau = graph.tau if tau is None else tau
    leader: dict[int, int] = {}

    def find(x: int) -> int:
        while leader.get(x, x) != x:
            leader[x] = leader.get(leader[x], leader[x])
            x = leader[x]
        return x

    def union(a: int, b: int):
        ra, rb = find(a), find(b)
        if ra != rb:
            leader[max(ra, rb)] = min(ra, rb)

    order = {id(node): i for i, node in enumerate(graph.nodes)}
    for parent in [graph.root] + graph.nodes:
        siblings = [c for c in graph.children(parent) if c.e]
        for i, left in enumerate(siblings):
            for right in siblings[i + 1:]:
                if compare_responses(left.l, right.l, tau):
                    union(order[id(left)], order[id(right)])

    groups: dict[int, list[PathSegment]] = {}
    for node in graph.nodes:
        if node.e:
            groups.setdefault(find(order[id(node)]), []).append(node)
    for root_index in sorted(groups):
        members = groups[root_index]
        if len(members) < 2:
            continue
        name = next((m.v for m in members if m.v), None) or graph.next_var()
        for member in members:
            member.v = name
    return graph


def get_graph_paths(graph: ApiGraph, node: PathSegment) -> list[str]:
    """Render every root-to-node path, substituting "{v}" for parameterized
    segments."""

    def render(seg: PathSegment) -> str:
        return "{" + seg.v + "}" if seg.v else seg.n

    def walk(seg: PathSegment) -> list[str]:
        parents = [p for p in graph.parents(seg) if p is not graph.root]
        if not parents:
            return ["/" + render(seg)]
        return [prefix + "/" + render(seg) for parent in parents for prefix in walk(parent)]

    seen = []
    for path in walk(node):
        if path not in seen:
            seen.append(path)
    return seen


def get_uri_template(paths: list[str], names=None) -> UriTemplate:
    """Index-wise match over same-length rendered paths: agreeing positions stay
    literal, differing positions become fresh parameters with the observed
    values as examples. Positions already rendered as "{var}" keep their name.
    """
    split = [[s for s in p.split("/") if s] for p in paths]
    if not split:
        return UriTemplate(())
    length = len(split[0])
    if any(len(s) != length for s in split):
        raise ValueError("paths reaching one node must have equal segment counts")
    counter = iter(f"var{i}" for i in range(10**6)) if names is None else names
    segments: list[Literal | Parameter] = []
    for i in range(length):
        values = [s[i] for s in split]
        distinct = list(dict.fromkeys(values))
        m = _VAR_RE.match(distinct[0])
        if len(distinct) == 1:
            if m:
                segments.append(Parameter(m.group(1)))
            else:
                segments.append(Literal(distinct[0]))
        else:
            concrete = tuple(v for v in distinct if not _VAR_RE.match(v))
            segments.append(Parameter(next(counter), concrete, _infer_type(concrete)))
    return UriTemplate(tuple(segments))


def _infer_type(examples) -> str:
    if examples and all(re.fullmatch(r"-?\d+", e) for e in examples):
        return "integer"
    return "string"


def _var_examples(graph: ApiGraph) -> dict[str, tuple[str, ...]]:
    examples: dict[str, list[str]] = {}
    for node in graph.nodes:
        if node.v:
            bucket = examples.setdefault(node.v, [])
            for name in sorted(node.aliases):
                if name not in bucket:
                    bucket.append(name)
    return {name: tuple(values) for name, values in examples.items()}


def _payload_schema(body: bytes | None, mime: str | None) -> KeyTree | None:
    if not body:
        return None
    try:
        return key_tree(body, mime or "")
    except PayloadError:
        return None


def extract_openapi(graph: ApiGraph, title: str = "Inferred API") -> SpecDocument:
    """Derive the full spec document: templates per endpoint, one path item per
    template, and one operation per HTTP method observed at the endpoint."""
    merge_leaf_nodes(graph)
    var_examples = _var_examples(graph)
    alloc = iter(f"var{i}" for i in _count_from(graph))
    doc = SpecDocument(title=title, server_url=graph.base_url)

    for node in graph.nodes:
        if not node.e:
            continue
        rendered_paths = get_graph_paths(graph, node)
        template = get_uri_template(rendered_paths, names=alloc)
        template = _enrich_parameters(template, var_examples)
        rendered = template.render()
        item = doc.path_items.setdefault(rendered, {})
        doc.templates.setdefault(rendered, template)
        for call in graph.calls_at(node):
            method = call.request.method.lower()
            op = item.get(method)
            if op is None:
                op = OperationSpec(method=method, path_params=list(template.parameters()))
                item[method] = op
            _enrich_operation(op, call)
    return doc


def _count_from(graph: ApiGraph):
    i = graph.var_count
    while True:
        yield i
        i += 1


def _enrich_parameters(template: UriTemplate, var_examples) -> UriTemplate:
    segments = []
    for seg in template.segments:
        if isinstance(seg, Parameter) and not seg.examples and seg.name in var_examples:
            examples = var_examples[seg.name]
            seg = replace(seg, examples=examples, inferred_type=_infer_type(examples))
        segments.append(seg)
    return UriTemplate(tuple(segments))


def _enrich_operation(op: OperationSpec, call):
    for name, value in parse_qsl(call.request.query, keep_blank_values=True):
        if all(q.name != name for q in op.query_params):
            op.query_params.append(Parameter(name, (value,), _infer_type((value,))))
    if call.request.header("Authorization") is not None and "Authorization" not in op.header_params:
        op.header_params.append("Authorization")
    if call.request.method in MUTATING_METHODS and call.request.body and op.request_schema is None:
        schema = _payload_schema(call.request.body, call.request.body_mime)
        if schema is not None:
            op.request_mime = canonical_mime(call.request.body_mime)
            op.request_schema = schema
            op.request_example = call.request.body
    status = call.response.status
    if status not in op.responses:
        op.responses[status] = ResponseSpec(
            status=status,
            mime=canonical_mime(call.response.body_mime) if call.response.body else "",
            schema=_payload_schema(call.response.body, call.response.body_mime),
            example=call.response.body,
        )


# -- OpenAPI rendering -------------------------------------------------------


def _schema_object(tree: KeyTree, value) -> dict:
    """Inline OpenAPI schema from a key tree plus the representative value."""
    if isinstance(value, dict):
        props = {}
        for child in tree.children:
            props[child.label] = _schema_object(child, value.get(child.label))
        return {"type": "object", "properties": props}
    if isinstance(value, list):
        inner = tree.children[0] if tree.children else KeyTree("[]")
        sample = value[0] if value else None
        return {"type": "array", "items": _schema_object(inner, sample)}
    if isinstance(value, bool):
        return {"type": "boolean"}
    if isinstance(value, int):
        return {"type": "integer"}
    if isinstance(value, float):
        return {"type": "number"}
    return {"type": "string"}


def _body_schema(spec_mime: str, schema: KeyTree | None, example: bytes | None):
    if schema is None or example is None:
        return None, None
    mime = spec_mime or "application/json"
    if mime.endswith("xml") or mime.endswith("+xml"):
        return {"type": "string"}, example.decode("utf-8", "replace")
    try:
        value = json.loads(example.decode("utf-8"))
    except (ValueError, UnicodeDecodeError):
        return None, None
    return _schema_object(schema, value), value


def _parameter_object(param: Parameter, location: str) -> dict:
    out = {
        "name": param.name,
        "in": location,
        "required": location == "path",
        "schema": {"type": param.inferred_type},
    }
    if param.examples:
        example = param.examples[0]
        out["example"] = int(example) if param.inferred_type == "integer" else example
    return out


def _operation_object(op: OperationSpec) -> dict:
    out: dict = {}
    params = [_parameter_object(p, "path") for p in op.path_params]
    params += [_parameter_object(q, "query") for q in sorted(op.query_params, key=lambda q: q.name)]
    params += [
        {"name": name, "in": "header", "required": False, "schema": {"type": "string"}}
        for name in op.header_params
    ]
    if params:
        out["parameters"] = params
    if op.request_schema is not None:
        schema, example = _body_schema(op.request_mime or "", op.request_schema, op.request_example)
        if schema is not None:
            content = {"schema": schema}
            if example is not None:
                content["example"] = example
            out["requestBody"] = {
                "required": False,
                "content": {op.request_mime or "application/json": content},
            }
    responses = {}
    for status in sorted(op.responses):
        spec = op.responses[status]
        entry: dict = {"description": _status_description(status)}
        schema, example = _body_schema(spec.mime, spec.schema, spec.example)
        if schema is not None:
            body = {"schema": schema}
            if example is not None:
                body["example"] = example
            entry["content"] = {spec.mime or "application/json": body}
        responses[str(status)] = entry
    out["responses"] = responses or {"default": {"description": "unknown"}}
    return out


def _status_description(status: int) -> str:
    return {200: "OK", 201: "Created", 204: "No Content"}.get(status, f"status {status}")


def spec_to_mapping(doc: SpecDocument) -> dict:
    """SpecDocument as an OpenAPI 3.0.3 mapping with deterministic key order."""
    paths: dict = {}
    for rendered in sorted(doc.path_items):
        item: dict = {}
        methods = doc.path_items[rendered]
        ordered = [m for m in METHOD_ORDER if m in methods]
        ordered += [m for m in sorted(methods) if m not in METHOD_ORDER]
        for method in ordered:
            item[method] = _operation_object(methods[method])
        paths[rendered] = item
    return {
        "openapi": "3.0.3",
        "info": {"title": doc.title, "version": "1.0.0"},
        "servers": [{"url": doc.server_url}] if doc.server_url else [],
        "paths": paths,
    }


def render_openapi(doc: SpecDocument, fmt: str = "json") -> str:
    """Render the document byte-stably as OpenAPI JSON or YAML."""
    mapping = spec_to_mapping(doc)
    if fmt == "json":
        return json.dumps(mapping, indent=2, ensure_ascii=False) + "\n"
    if fmt == "yaml":
        return yaml.dump(mapping, sort_keys=False, allow_unicode=True, default_flow_style=False)
    raise ValueError(f"unknown format: {fmt!r}")
