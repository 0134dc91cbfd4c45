"""tabrex: table-reasoning execution engine with a function-call plan DSL.

Pipeline: parse a table, format it, obtain a program for the question, map
its helpers onto the builtin toolkit, linearize to a plan, validate, execute,
and explain; a chain-of-thought fallback covers every non-executable outcome.
The harness layers evaluation, training-data synthesis, and tool-usage
analytics on top.
"""

from .table import (
    Currency,
    Date,
    IndexOutOfBounds,
    Missing,
    Number,
    ParseError,
    Percent,
    Table,
    Text,
    cell_at,
    parse_cell,
    parse_table,
    render_cell_text,
    serialize_canonical,
)
from .formatting import FormatReport, clean_cells, format_table, repair, standardize
from .plan import (
    Diagnostic,
    Lit,
    MissingAnswer,
    NonLinearizable,
    Plan,
    PlanSyntaxError,
    Step,
    VarRef,
    has_errors,
    linearize_program,
    parse_plan,
    render_plan,
    validate_plan,
)
from .tools import (
    MappedTo,
    Registry,
    Rejected,
    ToolDef,
    ToolSpec,
    UnknownTool,
    abstract_tools,
    builtin_registry,
    consolidate,
    deduplicate,
    register_generated,
    tooldef_from_source,
)
from .execution import RunOutcome, execute_plan, render_value, run_tart
from .explain import (
    CallRef,
    MalformedRef,
    TextSeg,
    TraceMissing,
    parse_explanation,
    render,
    serialize_explanation,
    validate_refs,
)
from .gateway import (
    CacheOnlyGateway,
    Gateway,
    GatewayConfig,
    GatewayError,
    NoSolutionFound,
    PromptBundle,
    PromptTooLong,
    build_cot_prompt,
    build_directqa_prompt,
    build_explainer_prompt,
    build_formatter_prompt,
    build_toolmaker_prompt,
    extract_final_answer,
    parse_toolmaker_output,
)
from .harness import (
    Metrics,
    Record,
    RunConfig,
    SchemaError,
    SynthRecord,
    SynthStats,
    aggregate_outcomes,
    evaluate,
    load_records,
    macro_average,
    relative_improvement,
    relative_ratio,
    run_record,
    run_records,
    score,
    synthesize,
)
from .analytics import ToolStats, overlap, tool_stats

__version__ = "0.1.0"

__all__ = [
    "Currency", "Date", "IndexOutOfBounds", "Missing", "Number", "ParseError",
    "Percent", "Table", "Text", "cell_at", "parse_cell", "parse_table",
    "render_cell_text", "serialize_canonical",
    "FormatReport", "clean_cells", "format_table", "repair", "standardize",
    "Diagnostic", "Lit", "MissingAnswer", "NonLinearizable", "Plan",
    "PlanSyntaxError", "Step", "VarRef", "has_errors", "linearize_program",
    "parse_plan", "render_plan", "validate_plan",
    "MappedTo", "Registry", "Rejected", "ToolDef", "ToolSpec", "UnknownTool",
    "abstract_tools", "builtin_registry", "consolidate", "deduplicate",
    "register_generated", "tooldef_from_source",
    "RunOutcome", "execute_plan", "render_value", "run_tart",
    "CallRef", "MalformedRef", "TextSeg", "TraceMissing", "parse_explanation",
    "render", "serialize_explanation", "validate_refs",
    "CacheOnlyGateway", "Gateway", "GatewayConfig", "GatewayError",
    "NoSolutionFound", "PromptBundle", "PromptTooLong", "build_cot_prompt",
    "build_directqa_prompt", "build_explainer_prompt", "build_formatter_prompt",
    "build_toolmaker_prompt", "extract_final_answer", "parse_toolmaker_output",
    "Metrics", "Record", "RunConfig", "SchemaError", "SynthRecord",
    "SynthStats", "aggregate_outcomes", "evaluate", "load_records",
    "macro_average", "relative_improvement", "relative_ratio", "run_record",
    "run_records", "score", "synthesize",
    "ToolStats", "overlap", "tool_stats",
    "__version__",
]
