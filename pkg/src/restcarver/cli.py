"""Command-line entry point: record, carve, infer, emit-tests, replay, evaluate."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import evaluate as evaluate_mod
from . import filters, ingest, probe, specgen, testsuite
from .fixture import FixtureServer, write_ground_truth
from .graph import build_api_graph
from .recorder import ProxyConfig, serve


def _write_summary(out_dir: Path, command: str, ok: bool, **details) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {"command": command, "ok": ok}
    summary.update(details)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n",
                                          encoding="utf-8")


def _load_config(path: str | None):
    if not path:
        return filters.FilterConfig(), {}
    cfg = filters.load_filter_config(path)
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json"):
        data = json.loads(text)
    else:
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        data = tomllib.loads(text)
    return cfg, data.get("probe", {})


def cmd_carve(args) -> int:
    out_dir = Path(args.out_dir)
    cfg, _ = _load_config(args.config)
    if args.filters is not None:
        names = tuple(n.strip() for n in args.filters.split(",") if n.strip())
        cfg = filters.FilterConfig(
            enabled_filters=names,
            extra_mime_allow=cfg.extra_mime_allow,
            url_deny_patterns=cfg.url_deny_patterns,
        )
    try:
        source = ingest.RecordingSource(
            kind=args.format or ingest.RecordingSource.from_path(args.input).kind,
            path=args.input,
            base_url=args.base_url,
        )
        seq, dropped_external = ingest.load_recording(source)
    except ingest.IngestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        _write_summary(out_dir, "carve", False, error=str(exc))
        return 1
    filtered, report = filters.run_pipeline(seq, cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    sequence_path = out_dir / "sequence.json"
    testsuite.emit_suite(filtered, sequence_path, include_responses=True)
    report_path = out_dir / "filter_report.json"
    report_doc = report.as_dict()
    report_doc["dropped_external"] = dropped_external
    report_path.write_text(json.dumps(report_doc, indent=2) + "\n", encoding="utf-8")
    print(f"recorded={report.recorded_count} kept={report.kept_count} "
          f"dropped={report.dropped_by_filter} external={dropped_external}")
    _write_summary(out_dir, "carve", True,
                   artifacts=[str(sequence_path), str(report_path)],
                   base_url=filtered.base_url, **report_doc)
    return 0


def _parse_stages(raw):
    if raw is None:
        return probe.ALL_STRATEGIES
    names = raw.split(",") if isinstance(raw, str) else raw
    stages = []
    for name in names:
        name = name.strip().lower()
        if not name:
            continue
        try:
            stages.append(probe.Strategy(name))
        except ValueError:
            raise SystemExit(f"unknown probe stage: {name!r}")
    return tuple(stages)


def cmd_infer(args) -> int:
    out_dir = Path(args.out_dir)
    if args.probe and not args.target:
        print("error: --probe requires --target", file=sys.stderr)
        _write_summary(out_dir, "infer", False, error="--probe requires --target")
        return 2
    try:
        seq = testsuite.suite_to_sequence(testsuite.load_suite(args.sequence))
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        _write_summary(out_dir, "infer", False, error=str(exc))
        return 1
    _, probe_cfg = _load_config(args.config)
    graph = build_api_graph(seq.calls, base_url=seq.base_url, tau=args.tau)
    details: dict = {
        "paths_recorded": len(seq.calls),
        "checkpoints": len(probe.find_checkpoints(seq)),
    }
    if args.probe:
        budget = probe.ProbeBudget(
            max_probes_executed=(
                args.max_probes if args.max_probes is not None
                else probe_cfg.get("max_probes_executed")
            ),
            max_wall_time=(
                args.max_time if args.max_time is not None
                else probe_cfg.get("max_wall_time")
            ),
            stages_enabled=_parse_stages(
                args.stages or probe_cfg.get("stages_enabled") or None
            ),
            unsafe_methods=(
                args.unsafe_methods if args.unsafe_methods is not None
                else probe_cfg.get("unsafe_methods", True)
            ),
        )
        result = probe.expand(seq, graph, budget, target=args.target)
        graph = result.graph
        augmented_path = out_dir / "augmented-sequence.json"
        out_dir.mkdir(parents=True, exist_ok=True)
        testsuite.emit_suite(result.sequence, augmented_path, include_responses=True)
        details["probe_stats"] = {
            name: vars(stats) for name, stats in result.stats.items()
        }
        details["budget_exhausted"] = result.budget_exhausted
        details["augmented_calls"] = len(result.sequence.calls)
    doc = specgen.extract_openapi(graph, title=args.title)
    out_dir.mkdir(parents=True, exist_ok=True)
    yaml_path = out_dir / "openapi.yaml"
    json_path = out_dir / "openapi.json"
    yaml_path.write_text(specgen.render_openapi(doc, "yaml"), encoding="utf-8")
    json_path.write_text(specgen.render_openapi(doc, "json"), encoding="utf-8")
    if args.dot:
        (out_dir / "graph.dot").write_text(graph.to_dot() + "\n", encoding="utf-8")
    print(f"inferred {len(doc.path_items)} path items -> {yaml_path}")
    _write_summary(out_dir, "infer", True,
                   artifacts=[str(yaml_path), str(json_path)],
                   path_items=sorted(doc.path_items), **details)
    return 0


def cmd_emit_tests(args) -> int:
    out_dir = Path(args.out_dir)
    try:
        seq = testsuite.suite_to_sequence(testsuite.load_suite(args.sequence))
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        _write_summary(out_dir, "emit-tests", False, error=str(exc))
        return 1
    checkpoints = [cp.index for cp in probe.find_checkpoints(seq)]
    out_dir.mkdir(parents=True, exist_ok=True)
    suite_path = out_dir / "suite.json"
    doc = testsuite.emit_suite(seq, suite_path, split=args.split, checkpoints=checkpoints)
    print(f"emitted {len(doc['cases'])} test case(s) -> {suite_path}")
    _write_summary(out_dir, "emit-tests", True, artifacts=[str(suite_path)],
                   cases=len(doc["cases"]),
                   steps=sum(len(c["steps"]) for c in doc["cases"]))
    return 0


def cmd_replay(args) -> int:
    out_dir = Path(args.out_dir)
    try:
        doc = testsuite.load_suite(args.suite)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        _write_summary(out_dir, "replay", False, error=str(exc))
        return 1
    report = testsuite.replay(doc, target=args.target, timeout=args.timeout)
    width = max((len(s.name) for s in report.per_step), default=4)
    for step in report.per_step:
        status = "-" if step.status is None else str(step.status)
        print(f"{step.name:<{width}}  {status:>4}  {step.latency_ms:8.1f}ms  "
              f"{step.verdict}{'  ' + step.detail if step.detail else ''}")
    print(f"total={report.total} passed={report.passed} failed={report.failed} "
          f"wall_time={report.wall_time:.3f}s")
    if args.report_json:
        Path(args.report_json).write_text(
            json.dumps(report.as_dict(), indent=2) + "\n", encoding="utf-8")
    _write_summary(out_dir, "replay", True, total=report.total,
                   passed=report.passed, failed=report.failed,
                   wall_time_s=report.wall_time)
    return 0 if report.failed == 0 else 1


def cmd_evaluate(args) -> int:
    out_dir = Path(args.out_dir)
    ignore = frozenset(
        m.strip().lower() for m in args.ignore_methods.split(",") if m.strip()
    )
    try:
        metrics = evaluate_mod.score(args.gen, args.gt, loose=args.loose,
                                     ignore_methods=ignore)
        report = evaluate_mod.diff_report(args.gen, args.gt, loose=args.loose,
                                          ignore_methods=ignore)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        _write_summary(out_dir, "evaluate", False, error=str(exc))
        return 1
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.json"
    evaluate_mod.write_metrics(metrics, metrics_path)
    print(f"path:      precision={metrics.path_precision:.2f} "
          f"recall={metrics.path_recall:.2f} f1={metrics.path_f1:.2f} "
          f"duplication={metrics.path_duplication:.2f}")
    print(f"operation: precision={metrics.op_precision:.2f} "
          f"recall={metrics.op_recall:.2f} f1={metrics.op_f1:.2f} "
          f"precision*={metrics.op_precision_starred:.2f} "
          f"f1*={metrics.op_f1_starred:.2f}")
    print(evaluate_mod.render_diff_table(report))
    _write_summary(out_dir, "evaluate", True, artifacts=[str(metrics_path)],
                   metrics=metrics.as_dict(), diff=report)
    return 0


def cmd_record(args) -> int:
    host, _, port = args.listen.partition(":")
    config = ProxyConfig(
        listen_host=host or "127.0.0.1",
        listen_port=int(port or 0),
        upstream=args.upstream,
        log_path=args.out,
        max_body_capture=args.max_body,
    )
    return serve(config)


def cmd_fixture_serve(args) -> int:
    if args.write_gt:
        write_ground_truth(args.write_gt)
        print(f"ground truth written to {args.write_gt}")
        if args.gt_only:
            return 0
    server = FixtureServer(args.host, args.port)
    print(f"fixture serving on {server.base_url} (POST /__reset reseeds)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="restcarver",
        description="Carve API tests and infer OpenAPI specs from recorded web traffic.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out-dir", default="out", help="artifact directory")
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("carve", help="load a recording and filter it into a sequence file")
    p.add_argument("--input", required=True, help="HAR or JSONL recording")
    p.add_argument("--format", choices=["har", "jsonl"], help="override input detection")
    p.add_argument("--base-url", help="base URL (autodetected when omitted)")
    p.add_argument("--filters", help="comma list among operation,status,mime")
    p.add_argument("--config", help="TOML/JSON config file")
    common(p)
    p.set_defaults(func=cmd_carve)

    p = sub.add_parser("infer", help="build the API graph and emit an OpenAPI spec")
    p.add_argument("--sequence", required=True, help="sequence file from carve")
    p.add_argument("--probe", action="store_true", help="expand the graph by live probing")
    p.add_argument("--target", help="live base URL to probe against")
    p.add_argument("--max-probes", type=int, default=None)
    p.add_argument("--max-time", type=float, default=None, help="probe wall-time budget (s)")
    p.add_argument("--stages", help="comma list among intermediate,bipartite,response,operation")
    p.add_argument("--unsafe-methods", action=argparse.BooleanOptionalAction, default=None,
                   help="allow POST/PUT/PATCH/DELETE probes (default: on)")
    p.add_argument("--tau", type=float, default=0.0, help="response similarity threshold")
    p.add_argument("--title", default="Inferred API")
    p.add_argument("--dot", action="store_true", help="also write graph.dot")
    p.add_argument("--config", help="TOML/JSON config file (probe section)")
    common(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("emit-tests", help="write the replayable test suite")
    p.add_argument("--sequence", required=True)
    p.add_argument("--split", choices=["single", "per-checkpoint"], default="single")
    common(p)
    p.set_defaults(func=cmd_emit_tests)

    p = sub.add_parser("replay", help="execute a suite against a live server")
    p.add_argument("--suite", required=True)
    p.add_argument("--target", help="override the suite's base URL")
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--report-json", help="also write the run report as JSON")
    common(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("evaluate", help="score a generated spec against ground truth")
    p.add_argument("--gen", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--loose", action="store_true",
                   help="let parameters match concrete literals")
    p.add_argument("--ignore-methods", default="OPTIONS,HEAD",
                   help="methods excluded from starred operation precision")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("record", help="run the recording proxy")
    p.add_argument("--listen", default="127.0.0.1:8080")
    p.add_argument("--upstream", help="reverse-proxy everything to this origin")
    p.add_argument("--out", required=True, help="JSONL log path")
    p.add_argument("--max-body", type=int, default=1_000_000)
    common(p)
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("fixture-serve", help="run the built-in demo REST service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--write-gt", help="write the fixture ground-truth spec here")
    p.add_argument("--gt-only", action="store_true", help="write the ground truth and exit")
    common(p)
    p.set_defaults(func=cmd_fixture_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.monotonic()
    code = args.func(args)
    if args.verbose:
        print(f"[{args.command}] finished in {time.monotonic() - started:.2f}s "
              f"with exit code {code}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
