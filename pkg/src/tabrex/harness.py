"""Evaluation harness: dataset ingestion, answer scoring, accuracy and
execution-rate metrics, and training-data synthesis with verification.

Scoring normalizes both sides before comparing. Numeric answers match under
a relative tolerance; label answers pass through per-dataset label maps so
"supports" and "1" score as the same class. Metrics are macro-averaged: each
dataset's percentages are rounded to one decimal, then averaged across
datasets and rounded again, which is how the source tables report averages.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation, ROUND_HALF_UP
from functools import lru_cache
from importlib import resources

from .execution import RunOutcome, run_tart
from .table import Table, parse_table

TASKS = ("tqa", "tfv")
METHODS = ("tart", "cot", "directqa")


class SchemaError(Exception):
    def __init__(self, line: int, field_name: str):
        super().__init__(f"line {line}: bad or missing field {field_name!r}")
        self.line = line
        self.field = field_name


@dataclass(frozen=True)
class Record:
    id: str
    task: str
    dataset: str
    query: str
    table: Table
    gold: str
    context_text: str | None = None


@dataclass(frozen=True)
class RunConfig:
    formatter_mode: str = "rules"
    rel_tol: float = 1e-4
    abs_tol: float = 1e-6
    label_maps: dict | None = None

    def label_map_for(self, dataset: str) -> dict:
        maps = self.label_maps if self.label_maps is not None else default_label_maps()
        return maps.get(dataset, {})


@lru_cache(maxsize=1)
def default_label_maps() -> dict:
    path = resources.files("tabrex").joinpath("data/label_maps.json")
    return json.loads(path.read_text(encoding="utf-8"))


def load_records(path, schema: str = "jsonl_v1") -> list:
    if schema != "jsonl_v1":
        raise ValueError(f"unsupported schema: {schema!r}")
    records = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                raise SchemaError(line_no, "json")
            if not isinstance(obj, dict):
                raise SchemaError(line_no, "json")
            for key in ("id", "task", "dataset", "query", "gold"):
                if not isinstance(obj.get(key), str) or (key != "query" and not obj[key]):
                    raise SchemaError(line_no, key)
            if obj["task"] not in TASKS:
                raise SchemaError(line_no, "task")
            if not isinstance(obj.get("table"), list) or not obj["table"]:
                raise SchemaError(line_no, "table")
            context = obj.get("context_text")
            if context is not None and not isinstance(context, str):
                raise SchemaError(line_no, "context_text")
            try:
                table = parse_table(json.dumps(obj["table"], ensure_ascii=False),
                                    "json_rows")
            except Exception:
                raise SchemaError(line_no, "table")
            records.append(Record(obj["id"], obj["task"], obj["dataset"],
                                  obj["query"], table, obj["gold"], context))
    return records


_STRIP_CHARS = str.maketrans("", "", "$€£¥,%")


def _normalize_answer(text: str) -> str:
    return text.strip().casefold().translate(_STRIP_CHARS).strip()


def _as_number(text: str):
    if not text:
        return None
    try:
        return Decimal(text)
    except InvalidOperation:
        return None


def score(pred: str, gold: str, task: str, label_map: dict | None = None,
          rel_tol: float = 1e-4, abs_tol: float = 1e-6) -> bool:
    """Does the predicted answer match the gold one?

    tqa: normalized comparison, numeric when both sides parse as numbers.
    tfv: both sides pass through the label map, then exact match.
    """
    pred_n = _normalize_answer(pred)
    gold_n = _normalize_answer(gold)
    if task == "tfv":
        label_map = label_map or {}
        return label_map.get(pred_n, pred_n) == label_map.get(gold_n, gold_n)
    pred_num = _as_number(pred_n)
    gold_num = _as_number(gold_n)
    if pred_num is not None and gold_num is not None:
        return math.isclose(float(pred_num), float(gold_num),
                            rel_tol=rel_tol, abs_tol=abs_tol)
    return pred_n == gold_n


def round1(value) -> float:
    """One-decimal percentage with halves rounded up, as the tables print."""
    return float(Decimal(str(value)).quantize(Decimal("0.1"),
                                              rounding=ROUND_HALF_UP))


def macro_average(values) -> float:
    values = list(values)
    if not values:
        return 0.0
    total = sum(Decimal(str(v)) for v in values)
    return round1(total / len(values))


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    execution_rate: float
    n: int
    per_dataset: dict

    @classmethod
    def from_per_dataset(cls, per_dataset: dict, n: int) -> "Metrics":
        return cls(
            accuracy=macro_average(acc for acc, _ in per_dataset.values()),
            execution_rate=macro_average(exe for _, exe in per_dataset.values()),
            n=n,
            per_dataset=dict(sorted(per_dataset.items())),
        )

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "execution_rate": self.execution_rate,
            "n": self.n,
            "per_dataset": {
                name: {"accuracy": acc, "execution_rate": exe}
                for name, (acc, exe) in sorted(self.per_dataset.items())
            },
        }


def relative_ratio(a, b) -> float:
    """a as a percentage of b, one decimal. Accepts Metrics or raw numbers."""
    a_val = Decimal(str(getattr(a, "accuracy", a)))
    b_val = Decimal(str(getattr(b, "accuracy", b)))
    if b_val <= 0:
        raise ValueError("reference accuracy must be positive")
    return round1(100 * a_val / b_val)


def relative_improvement(a, b) -> float:
    """Percentage change from b to a, one decimal."""
    a_val = Decimal(str(getattr(a, "accuracy", a)))
    b_val = Decimal(str(getattr(b, "accuracy", b)))
    if b_val <= 0:
        raise ValueError("reference accuracy must be positive")
    return round1(100 * (a_val - b_val) / b_val)


def _qa_outcome(gateway, build_prompt, table, query, final_answer) -> RunOutcome:
    from .gateway import GatewayError

    try:
        reply = gateway.complete(build_prompt(table, query))
    except GatewayError as err:
        return RunOutcome("", False, False, (), (None, "GatewayError", str(err)))
    return RunOutcome(final_answer(reply), False, False, (), None)


def run_record(record: Record, method: str, gateway, config: RunConfig) -> RunOutcome:
    from .gateway import build_cot_prompt, build_directqa_prompt, extract_final_answer

    if method == "tart":
        return run_tart(record, config, gateway)
    if method == "cot":
        return _qa_outcome(gateway, build_cot_prompt, record.table, record.query,
                           extract_final_answer)
    if method == "directqa":
        return _qa_outcome(gateway, build_directqa_prompt, record.table,
                           record.query, lambda reply: reply.strip())
    raise ValueError(f"unsupported method: {method!r}")


def run_records(records: list, method: str, gateway, config: RunConfig) -> list:
    """Per-record outcomes, ordered by record id so output bytes are stable
    no matter how the work is scheduled."""
    ordered = sorted(records, key=lambda r: r.id)
    return [(record, run_record(record, method, gateway, config))
            for record in ordered]


def aggregate_outcomes(pairs: list, config: RunConfig) -> Metrics:
    by_dataset: dict = {}
    for record, outcome in pairs:
        by_dataset.setdefault(record.dataset, []).append((record, outcome))
    per_dataset = {}
    for dataset, group in by_dataset.items():
        label_map = config.label_map_for(dataset)
        correct = sum(
            score(outcome.answer, record.gold, record.task, label_map,
                  config.rel_tol, config.abs_tol)
            for record, outcome in group)
        executable = sum(outcome.executable for _, outcome in group)
        per_dataset[dataset] = (round1(100 * Decimal(correct) / len(group)),
                                round1(100 * Decimal(executable) / len(group)))
    return Metrics.from_per_dataset(per_dataset, n=len(pairs))


def evaluate(records: list, method: str, gateway, config: RunConfig) -> Metrics:
    if not records:
        raise ValueError("no records to evaluate")
    return aggregate_outcomes(run_records(records, method, gateway, config), config)


@dataclass(frozen=True)
class SynthRecord:
    module: str  # formatter | toolmaker | explainer
    input: str
    target: str
    source_record: str
    verified: bool = True

    def to_dict(self) -> dict:
        return {"module": self.module, "input": self.input, "target": self.target,
                "source_record": self.source_record, "verified": self.verified}


@dataclass
class SynthStats:
    generated: int = 0
    executable: int = 0
    verified: int = 0
    formatter: int = 0
    toolmaker: int = 0
    explainer: int = 0

    def to_dict(self) -> dict:
        return {"generated": self.generated, "executable": self.executable,
                "verified": self.verified, "formatter": self.formatter,
                "toolmaker": self.toolmaker, "explainer": self.explainer}


@dataclass
class _SynthDraft:
    record: Record
    formatted: Table
    tools: list
    solution: str
    plan: object


def _attempt_program(record: Record, gateway, config: RunConfig):
    """Teacher round for one record: program, linearized plan, executed
    outcome. Returns (draft, outcome) or (None, None) when no runnable plan
    came back."""
    from dataclasses import replace

    from .formatting import format_table
    from .gateway import (
        GatewayError,
        NoSolutionFound,
        build_toolmaker_prompt,
        parse_toolmaker_output,
    )
    from .plan import NonLinearizable, has_errors, linearize_program, validate_plan
    from .tools import MappedTo, builtin_registry, register_generated

    formatted, _ = format_table(record.table, record.query)
    try:
        reply = gateway.complete(
            build_toolmaker_prompt(formatted, record.query, answer=record.gold))
        tools, solution = parse_toolmaker_output(reply)
        plan = linearize_program(solution)
    except (GatewayError, NoSolutionFound, NonLinearizable):
        return None, None

    registry = builtin_registry()
    renames = {}
    for tool in tools:
        mapped = register_generated(tool, registry)
        if isinstance(mapped, MappedTo):
            renames[tool.name] = mapped.name
    runnable = replace(plan, steps=tuple(
        replace(step, tool=renames.get(step.tool, step.tool))
        for step in plan.steps))
    if has_errors(validate_plan(runnable, registry)):
        return None, None
    from .execution import execute_plan

    outcome = execute_plan(runnable, formatted, registry)
    draft = _SynthDraft(record, formatted, tools, solution, plan)
    return draft, outcome


def _toolmaker_target(draft: _SynthDraft, kept_names: set, alias_map: dict,
                      sources_by_name: dict) -> str | None:
    """Tool defs plus plan in canonical names; None when the plan leans on a
    tool the corpus filter dropped."""
    from dataclasses import replace

    from .plan import render_plan

    used = []
    for tool in draft.tools:
        canonical = alias_map.get(tool.name, tool.name)
        if canonical not in kept_names:
            return None
        if canonical not in used:
            used.append(canonical)
    renames = {t.name: alias_map.get(t.name, t.name) for t in draft.tools}
    plan = replace(draft.plan, steps=tuple(
        replace(step, tool=renames.get(step.tool, step.tool))
        for step in draft.plan.steps))
    blocks = [sources_by_name[name] for name in used]
    blocks.append(render_plan(plan))
    return "\n\n".join(blocks)


def synthesize(records: list, gateway, config: RunConfig) -> tuple:
    """Training-data synthesis: keep only teacher programs whose answers
    verify against gold, filter the pooled tool corpus (singletons out,
    duplicates merged), and emit aligned formatter/toolmaker/explainer
    streams."""
    from .explain import parse_explanation, validate_refs
    from .gateway import (
        GatewayError,
        build_explainer_prompt,
        build_formatter_prompt,
        build_toolmaker_prompt,
    )
    from .plan import has_errors
    from .table import serialize_canonical
    from .tools import consolidate

    stats = SynthStats()
    drafts = []
    for record in sorted(records, key=lambda r: r.id):
        stats.generated += 1
        draft, outcome = _attempt_program(record, gateway, config)
        if draft is None or not outcome.executable:
            continue
        stats.executable += 1
        label_map = config.label_map_for(record.dataset)
        if not score(outcome.answer, record.gold, record.task, label_map,
                     config.rel_tol, config.abs_tol):
            continue
        stats.verified += 1
        drafts.append(draft)

    corpus = [tool for draft in drafts for tool in draft.tools]
    kept_defs, alias_map = consolidate(corpus, min_count=2)
    kept_names = {d.name for d in kept_defs}
    sources_by_name = {d.name: d.source_text for d in kept_defs}

    out = []
    for draft in drafts:
        record = draft.record
        out.append(SynthRecord(
            "formatter",
            build_formatter_prompt(record.table, record.query).user,
            serialize_canonical(draft.formatted),
            record.id))
        stats.formatter += 1

        target = _toolmaker_target(draft, kept_names, alias_map, sources_by_name)
        if target is None:
            continue
        out.append(SynthRecord(
            "toolmaker",
            build_toolmaker_prompt(draft.formatted, record.query).user,
            target,
            record.id))
        stats.toolmaker += 1

        try:
            explanation = gateway.complete(
                build_explainer_prompt(draft.solution, _ExplainView(record, draft)))
        except GatewayError:
            continue
        try:
            segments = parse_explanation(explanation)
        except Exception:
            continue
        if has_errors(validate_refs(segments, len(draft.plan.steps))):
            continue
        out.append(SynthRecord("explainer", target, explanation, record.id))
        stats.explainer += 1
    return out, stats


class _ExplainView:
    """Adapter handing the explainer prompt the formatted table."""

    def __init__(self, record: Record, draft: _SynthDraft):
        self.table = draft.formatted
        self.query = record.query
        self.gold = record.gold
