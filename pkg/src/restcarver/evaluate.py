"""Score a generated OpenAPI document against a ground-truth document."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .specgen import METHOD_ORDER, Parameter, SpecDocument, UriTemplate, spec_to_mapping

DEFAULT_IGNORE_METHODS = frozenset({"options", "head"})

_KNOWN_METHODS = frozenset(METHOD_ORDER) | {"connect"}


@dataclass
class ParsedSpec:
    """Paths and operations of a spec document, plus any observed statuses."""

    paths: dict[str, dict[str, set[str]]] = field(default_factory=dict)
    templates: dict[str, UriTemplate] = field(default_factory=dict)

    def operations(self) -> list[tuple[str, str]]:
        return [(p, m) for p in sorted(self.paths) for m in sorted(self.paths[p])]


def parse_spec(doc) -> ParsedSpec:
    """Accepts OpenAPI 3.x / Swagger 2.0 mappings, JSON/YAML text, file paths,
    or a SpecDocument."""
    if isinstance(doc, SpecDocument):
        doc = spec_to_mapping(doc)
    elif isinstance(doc, (str, Path)) and "\n" not in str(doc) and Path(doc).exists():
        doc = yaml.safe_load(Path(doc).read_text(encoding="utf-8"))
    elif isinstance(doc, (str, bytes)):
        doc = yaml.safe_load(doc)
    if not isinstance(doc, dict) or "paths" not in doc:
        raise ValueError("not an OpenAPI or Swagger document: missing 'paths'")
    parsed = ParsedSpec()
    for raw_path, item in (doc.get("paths") or {}).items():
        if not isinstance(item, dict):
            continue
        methods: dict[str, set[str]] = {}
        for method, op in item.items():
            if method.lower() not in _KNOWN_METHODS:
                continue
            statuses = set()
            if isinstance(op, dict):
                statuses = {str(s) for s in (op.get("responses") or {})}
            methods[method.lower()] = statuses
        parsed.paths[raw_path] = methods
        parsed.templates[raw_path] = UriTemplate.parse(raw_path)
    return parsed


def match_paths(gen_template: UriTemplate, gt_template: UriTemplate,
                loose: bool = False) -> bool:
    """Segment-wise template match: parameters match parameters (names are
    irrelevant), literals match equal literals. A parameter on one side against
    a literal on the other only counts under loose matching."""
    if len(gen_template.segments) != len(gt_template.segments):
        return False
    for gen_seg, gt_seg in zip(gen_template.segments, gt_template.segments):
        gen_param = isinstance(gen_seg, Parameter)
        gt_param = isinstance(gt_seg, Parameter)
        if gen_param and gt_param:
            continue
        if not gen_param and not gt_param:
            if gen_seg.text != gt_seg.text:
                return False
            continue
        if not loose:
            return False
    return True


@dataclass
class SpecMetrics:
    path_precision: float = 0.0
    path_recall: float = 0.0
    path_f1: float = 0.0
    op_precision: float = 0.0
    op_recall: float = 0.0
    op_f1: float = 0.0
    op_precision_starred: float = 0.0
    op_f1_starred: float = 0.0
    path_duplication: float = 1.0
    op_duplication: float = 1.0
    path_tp: list = field(default_factory=list)
    path_fp: list = field(default_factory=list)
    path_fn: list = field(default_factory=list)
    op_tp: list = field(default_factory=list)
    op_fp: list = field(default_factory=list)
    op_fn: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "path": {
                "precision": self.path_precision,
                "recall": self.path_recall,
                "f1": self.path_f1,
                "duplication": self.path_duplication,
                "tp": self.path_tp, "fp": self.path_fp, "fn": self.path_fn,
            },
            "operation": {
                "precision": self.op_precision,
                "recall": self.op_recall,
                "f1": self.op_f1,
                "precision_starred": self.op_precision_starred,
                "f1_starred": self.op_f1_starred,
                "duplication": self.op_duplication,
                "tp": self.op_tp, "fp": self.op_fp, "fn": self.op_fn,
            },
        }


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def score(gen, gt, loose: bool = False,
          ignore_methods=DEFAULT_IGNORE_METHODS) -> SpecMetrics:
    """Precision/recall/F1 and duplication for paths and operations.

    The starred operation variant excludes false-positive operations whose
    method is on the ignore list (undocumented OPTIONS/HEAD by default).
    """
    gen_spec = parse_spec(gen)
    gt_spec = parse_spec(gt)
    metrics = SpecMetrics()

    gen_paths = sorted(gen_spec.paths)
    gt_paths = sorted(gt_spec.paths)
    path_map: dict[str, list[str]] = {}
    for gen_path in gen_paths:
        hits = [
            gt_path for gt_path in gt_paths
            if match_paths(gen_spec.templates[gen_path], gt_spec.templates[gt_path], loose)
        ]
        if hits:
            path_map[gen_path] = hits

    metrics.path_tp = sorted(path_map)
    metrics.path_fp = [p for p in gen_paths if p not in path_map]
    mapped_gt = sorted({hit for hits in path_map.values() for hit in hits})
    metrics.path_fn = [p for p in gt_paths if p not in mapped_gt]
    metrics.path_precision = _ratio(len(metrics.path_tp), len(gen_paths))
    metrics.path_recall = _ratio(len(mapped_gt), len(gt_paths))
    metrics.path_f1 = _f1(metrics.path_precision, metrics.path_recall)
    metrics.path_duplication = _ratio(len(mapped_gt), len(path_map)) if path_map else 1.0

    gen_ops = [(p, m) for p in gen_paths for m in sorted(gen_spec.paths[p])]
    gt_ops = [(p, m) for p in gt_paths for m in sorted(gt_spec.paths[p])]
    op_map: dict[tuple[str, str], list[tuple[str, str]]] = {}
    for gen_path, gen_method in gen_ops:
        hits = [
            (gt_path, gt_method) for gt_path, gt_method in gt_ops
            if gt_method == gen_method and match_paths(
                gen_spec.templates[gen_path], gt_spec.templates[gt_path], loose)
        ]
        if hits:
            op_map[(gen_path, gen_method)] = hits

    metrics.op_tp = sorted(op_map)
    metrics.op_fp = [op for op in gen_ops if op not in op_map]
    mapped_gt_ops = sorted({hit for hits in op_map.values() for hit in hits})
    metrics.op_fn = [op for op in gt_ops if op not in mapped_gt_ops]
    metrics.op_precision = _ratio(len(metrics.op_tp), len(gen_ops))
    metrics.op_recall = _ratio(len(mapped_gt_ops), len(gt_ops))
    metrics.op_f1 = _f1(metrics.op_precision, metrics.op_recall)
    metrics.op_duplication = _ratio(len(mapped_gt_ops), len(op_map)) if op_map else 1.0

    ignored = {m.lower() for m in ignore_methods}
    starred_total = len(gen_ops) - sum(1 for op in metrics.op_fp if op[1] in ignored)
    metrics.op_precision_starred = _ratio(len(metrics.op_tp), starred_total)
    metrics.op_f1_starred = _f1(metrics.op_precision_starred, metrics.op_recall)
    return metrics


def diff_report(gen, gt, loose: bool = False,
                ignore_methods=DEFAULT_IGNORE_METHODS) -> dict:
    """False positives/negatives plus suspected spec inconsistencies: generated
    operations that demonstrably succeeded (a recorded 2xx) yet are absent from
    the ground truth are implemented-but-undocumented."""
    gen_spec = parse_spec(gen)
    metrics = score(gen, gt, loose, ignore_methods)
    inconsistencies = []
    for path, method in metrics.op_fp:
        statuses = gen_spec.paths.get(path, {}).get(method, set())
        if any(s.isdigit() and 200 <= int(s) < 300 for s in statuses):
            inconsistencies.append({
                "path": path,
                "method": method,
                "statuses": sorted(statuses),
                "kind": "implemented-but-undocumented",
            })
    return {
        "path_false_positives": metrics.path_fp,
        "path_false_negatives": metrics.path_fn,
        "operation_false_positives": [list(op) for op in metrics.op_fp],
        "operation_false_negatives": [list(op) for op in metrics.op_fn],
        "inconsistencies": inconsistencies,
    }


def render_diff_table(report: dict) -> str:
    lines = []
    for title, rows in (
        ("Paths only in generated spec", report["path_false_positives"]),
        ("Paths missing from generated spec", report["path_false_negatives"]),
        ("Operations only in generated spec",
         [f"{m.upper()} {p}" for p, m in report["operation_false_positives"]]),
        ("Operations missing from generated spec",
         [f"{m.upper()} {p}" for p, m in report["operation_false_negatives"]]),
    ):
        lines.append(f"{title}: {len(rows)}")
        lines.extend(f"  {row}" for row in rows)
    lines.append(f"Suspected inconsistencies: {len(report['inconsistencies'])}")
    for item in report["inconsistencies"]:
        lines.append(
            f"  {item['method'].upper()} {item['path']} "
            f"returned {','.join(item['statuses'])} but is undocumented"
        )
    return "\n".join(lines)


def write_metrics(metrics: SpecMetrics, path) -> None:
    Path(path).write_text(json.dumps(metrics.as_dict(), indent=2) + "\n", encoding="utf-8")
