"""Command line entry points.

All JSON the CLI emits is rendered with sorted keys and a trailing newline
so repeated runs are diffable byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .analytics import overlap, tool_stats
from .execution import execute_plan
from .formatting import format_table
from .gateway import CacheOnlyGateway, Gateway, GatewayConfig
from .harness import (
    RunConfig,
    aggregate_outcomes,
    load_records,
    run_records,
    synthesize,
)
from .plan import parse_plan
from .table import parse_table, serialize_canonical
from .tools import builtin_registry


def _dump(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _write(path, payload):
    Path(path).write_text(_dump(payload), encoding="utf-8")


def _read_table(path: str, table_format: str):
    text = Path(path).read_text(encoding="utf-8")
    return parse_table(text, table_format)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _gateway_from_config(config: dict):
    settings = config.get("gateway", {})
    gw_config = GatewayConfig(**settings)
    if config.get("cache_only"):
        return CacheOnlyGateway(gw_config)
    return Gateway(gw_config)


def _run_config(config: dict) -> RunConfig:
    label_maps = config.get("label_maps")
    if label_maps is None and "label_maps_path" in config:
        label_maps = json.loads(
            Path(config["label_maps_path"]).read_text(encoding="utf-8"))
    return RunConfig(
        formatter_mode=config.get("formatter_mode", "rules"),
        rel_tol=config.get("rel_tol", 1e-4),
        abs_tol=config.get("abs_tol", 1e-6),
        label_maps=label_maps,
    )


def _cmd_format(args) -> int:
    table = _read_table(args.in_path, args.format)
    config = _load_config(args.config)
    gateway = _gateway_from_config(config) if args.mode == "llm" else None
    formatted, report = format_table(table, args.query, mode=args.mode,
                                     gateway=gateway)
    print(serialize_canonical(formatted))
    if args.report:
        _write(args.report, report.to_dict())
    return 0


def _cmd_run(args) -> int:
    table = _read_table(args.table, args.format)
    plan = parse_plan(Path(args.plan).read_text(encoding="utf-8"))
    outcome = execute_plan(plan, table, builtin_registry())
    sys.stdout.write(_dump(outcome.to_dict()))
    return 0


def _trace_payload(pairs) -> list:
    return [{"dataset": record.dataset, "id": record.id,
             "outcome": outcome.to_dict()} for record, outcome in pairs]


def _cmd_eval(args) -> int:
    config = _load_config(args.config)
    records = load_records(args.records)
    gateway = _gateway_from_config(config)
    run_config = _run_config(config)
    pairs = run_records(records, args.method, gateway, run_config)
    metrics = aggregate_outcomes(pairs, run_config)
    payload = metrics.to_dict()
    payload["method"] = args.method
    payload["registry_hash"] = builtin_registry().content_hash()
    _write(args.out, payload)
    if args.traces:
        _write(args.traces, _trace_payload(pairs))
    return 0


def _cmd_synth(args) -> int:
    config = _load_config(args.config)
    records = load_records(args.records)
    gateway = _gateway_from_config(config)
    run_config = _run_config(config)
    synth_records, stats = synthesize(records, gateway, run_config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for module in ("formatter", "toolmaker", "explainer"):
        lines = [json.dumps(r.to_dict(), sort_keys=True, ensure_ascii=False)
                 for r in synth_records if r.module == module]
        (out_dir / f"{module}.jsonl").write_text(
            "".join(line + "\n" for line in lines), encoding="utf-8")
    _write(out_dir / "stats.json", stats.to_dict())
    return 0


def _outcomes_from_dir(traces_dir: str) -> list:
    outcomes = []
    for path in sorted(Path(traces_dir).glob("*.json")):
        for entry in json.loads(path.read_text(encoding="utf-8")):
            outcomes.append(entry["outcome"])
    return outcomes


def _cmd_tools_stats(args) -> int:
    stats = tool_stats(_outcomes_from_dir(args.traces))
    payload = stats.to_dict()
    if args.compare:
        other = tool_stats(_outcomes_from_dir(args.compare))
        payload["overlap"] = overlap(stats, other)
    _write(args.out, payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tabrex")
    commands = parser.add_subparsers(dest="command", required=True)

    p_format = commands.add_parser("format", help="clean a table, print its canonical form")
    p_format.add_argument("--in", dest="in_path", required=True)
    p_format.add_argument("--format", default="csv",
                          choices=["csv", "markdown", "json_rows"])
    p_format.add_argument("--query", default="")
    p_format.add_argument("--mode", default="rules", choices=["rules", "llm"])
    p_format.add_argument("--report", default=None)
    p_format.add_argument("--config", default=None)
    p_format.set_defaults(func=_cmd_format)

    p_run = commands.add_parser("run", help="execute a plan file against a table")
    p_run.add_argument("--table", required=True)
    p_run.add_argument("--format", default="csv",
                       choices=["csv", "markdown", "json_rows"])
    p_run.add_argument("--plan", required=True)
    p_run.set_defaults(func=_cmd_run)

    p_eval = commands.add_parser("eval", help="score a record file")
    p_eval.add_argument("--records", required=True)
    p_eval.add_argument("--method", required=True,
                        choices=["tart", "cot", "directqa"])
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--traces", default=None)
    p_eval.add_argument("--config", default=None)
    p_eval.set_defaults(func=_cmd_eval)

    p_synth = commands.add_parser("synth", help="synthesize training data")
    p_synth.add_argument("--records", required=True)
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--config", default=None)
    p_synth.set_defaults(func=_cmd_synth)

    p_tools = commands.add_parser("tools", help="tool registry utilities")
    tool_commands = p_tools.add_subparsers(dest="tools_command", required=True)
    p_stats = tool_commands.add_parser("stats", help="usage stats from trace files")
    p_stats.add_argument("--traces", required=True)
    p_stats.add_argument("--compare", default=None)
    p_stats.add_argument("--out", required=True)
    p_stats.set_defaults(func=_cmd_tools_stats)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
