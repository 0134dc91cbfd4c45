"""Plan executor: typed runtime values, builtin tool semantics, trace capture.

Error discipline per step: unknown tool, then arity, then arguments left to
right (binding lookup before kind coercion, one argument at a time), then
tool-internal failures. The first error halts the run; the failing step is
not added to the trace.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal, InvalidOperation

from .plan import Lit, Plan, VarRef, render_arg
from .table import (
    Currency,
    Date,
    Missing,
    Number,
    Percent,
    Table,
    Text,
    format_decimal,
    parse_cell,
    render_cell_text,
    serialize_canonical,
)
from .tools import Registry, builtin_registry

STEP_BUDGET = 64


@dataclass(frozen=True)
class Scalar:
    cell: object


@dataclass(frozen=True)
class Column:
    cells: tuple
    source: str


@dataclass(frozen=True)
class Row:
    cells: tuple
    headers: tuple


@dataclass(frozen=True)
class TableV:
    table: Table


@dataclass(frozen=True)
class Bool:
    value: bool


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class ListNum:
    values: tuple


@dataclass(frozen=True)
class _ArrayV:
    # non-numeric array literal; never a tool input except through "any"
    values: tuple


@dataclass(frozen=True)
class RunOutcome:
    answer: str
    executable: bool
    fallback_used: bool
    trace: tuple
    error: tuple | None

    def to_dict(self) -> dict:
        error = None
        if self.error is not None:
            step, kind, message = self.error
            error = {"step": step, "kind": kind, "message": message}
        return {
            "answer": self.answer,
            "error": error,
            "executable": self.executable,
            "fallback_used": self.fallback_used,
            "trace": [
                {"step": s, "tool": t, "args": a, "result": r}
                for s, t, a, r in self.trace
            ],
        }


class _ExecError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind
        self.message = message


def _cell_number(cell) -> Decimal:
    """Numeric magnitude of a cell; cleans numeric-looking text like "$5"."""
    if isinstance(cell, Number):
        return cell.value
    if isinstance(cell, Currency):
        return cell.amount
    if isinstance(cell, Percent):
        return cell.value
    if isinstance(cell, Text):
        reparsed = parse_cell(cell.value.strip())
        if not isinstance(reparsed, (Text, Missing, Date)):
            return _cell_number(reparsed)
    raise _ExecError("TypeMismatch", f"expected number, got {cell!r}")


def _cell_payload(cell):
    if isinstance(cell, Number):
        return cell.value
    if isinstance(cell, Currency):
        return cell.amount
    if isinstance(cell, Percent):
        return cell.value
    if isinstance(cell, Date):
        return cell.value.isoformat()
    if isinstance(cell, Missing):
        return None
    return cell.value


def _unwrap(value):
    if isinstance(value, Scalar):
        return _cell_payload(value.cell)
    if isinstance(value, Bool):
        return value.value
    if isinstance(value, Str):
        return value.value
    if isinstance(value, (ListNum, _ArrayV)):
        return list(value.values)
    if isinstance(value, (Column, Row)):
        return [_cell_payload(c) for c in value.cells]
    if isinstance(value, TableV):
        t = value.table
        return [list(t.headers)] + [[_cell_payload(c) for c in row] for row in t.rows]
    raise AssertionError(type(value))


def _values_equal(a, b) -> bool:
    a, b = _unwrap(a), _unwrap(b)
    return _payloads_equal(a, b)


def _payloads_equal(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a is b
    if isinstance(a, Decimal) and isinstance(b, Decimal):
        return a == b
    if isinstance(a, str) and isinstance(b, str):
        return a == b
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(_payloads_equal(x, y) for x, y in zip(a, b))
    return False


def render_value(value) -> str:
    if isinstance(value, Scalar):
        return render_cell_text(value.cell)
    if isinstance(value, Bool):
        return "yes" if value.value else "no"
    if isinstance(value, Str):
        return value.value
    if isinstance(value, ListNum):
        return "[" + ", ".join(format_decimal(x) for x in value.values) + "]"
    if isinstance(value, _ArrayV):
        return "[" + ", ".join(
            ("yes" if x else "no") if isinstance(x, bool) else str(x)
            for x in value.values) + "]"
    if isinstance(value, (Column, Row)):
        return "[" + ", ".join(render_cell_text(c) for c in value.cells) + "]"
    if isinstance(value, TableV):
        return serialize_canonical(value.table)
    raise AssertionError(type(value))


def _number_of(value) -> Decimal:
    if isinstance(value, Scalar):
        return _cell_number(value.cell)
    raise _ExecError("TypeMismatch", f"expected number, got {value.__class__.__name__}")


def _coerce(value, kind: str):
    if kind == "any":
        return value
    if kind == "number":
        return _number_of(value)
    if kind == "string":
        if isinstance(value, Str):
            return value.value
        if isinstance(value, Scalar) and isinstance(value.cell, Text):
            return value.cell.value
        raise _ExecError("TypeMismatch", f"expected string, got {value.__class__.__name__}")
    if kind == "bool":
        if isinstance(value, Bool):
            return value.value
        raise _ExecError("TypeMismatch", f"expected bool, got {value.__class__.__name__}")
    if kind == "table":
        if isinstance(value, TableV):
            return value.table
        raise _ExecError("TypeMismatch", f"expected table, got {value.__class__.__name__}")
    if kind == "column":
        if isinstance(value, Column):
            return value
        raise _ExecError("TypeMismatch", f"expected column, got {value.__class__.__name__}")
    if kind == "row":
        if isinstance(value, Row):
            return value
        raise _ExecError("TypeMismatch", f"expected row, got {value.__class__.__name__}")
    if kind == "list_number":
        if isinstance(value, ListNum):
            return list(value.values)
        if isinstance(value, Column):
            return [_cell_number(c) for c in value.cells]
        raise _ExecError(
            "TypeMismatch", f"expected number list, got {value.__class__.__name__}")
    raise AssertionError(kind)


def _integral_index(value: Decimal, size: int) -> int:
    if value != value.to_integral_value():
        raise _ExecError("TypeMismatch", f"index {format_decimal(value)} is not an integer")
    index = int(value)
    if index < 0 or index >= size:
        raise _ExecError("IndexOutOfBounds", f"index {index} out of range 0..{size - 1}")
    return index


def _column_numbers(column: Column) -> list:
    return [_cell_number(c) for c in column.cells]


def _t_get_column_by_name(table: Table, name: str):
    if name not in table.headers:
        raise _ExecError("ColumnNotFound", f"no column named {name}")
    j = table.headers.index(name)
    return Column(tuple(row[j] for row in table.rows), name)


def _t_get_column_by_index(table: Table, index: Decimal):
    j = _integral_index(index, len(table.headers))
    return Column(tuple(row[j] for row in table.rows), table.headers[j])


def _t_get_row_by_name(table: Table, name: str):
    for row in table.rows:
        if row and _payloads_equal(_cell_payload(row[0]), name):
            return Row(tuple(row), tuple(table.headers))
    raise _ExecError("RowNotFound", f"no row named {name}")


def _t_get_row_index_by_value(column: Column, value):
    target = _unwrap(value)
    for i, cell in enumerate(column.cells):
        if _payloads_equal(_cell_payload(cell), target):
            return Scalar(Number(Decimal(i)))
    raise _ExecError("RowNotFound", f"value {render_value(value)} not in column")


def _t_get_column_cell_value(column: Column, index: Decimal):
    return Scalar(column.cells[_integral_index(index, len(column.cells))])


def _t_extract_price(text: str):
    cleaned = "".join(ch for ch in text if ch.isdigit() or ch == ".")
    try:
        return Scalar(Number(Decimal(cleaned)))
    except InvalidOperation:
        raise _ExecError("TypeMismatch", f"no price in {text!r}")


def _t_divide(a: Decimal, b: Decimal):
    if b == 0:
        raise _ExecError("DivByZero", "division by zero")
    return Scalar(Number(a / b))


def _t_average(values: list):
    if not values:
        raise _ExecError("DivByZero", "average of empty list")
    total = Decimal(0)
    for x in values:
        total = total + x
    return Scalar(Number(total / Decimal(len(values))))


def _t_extreme(values: list, want_max: bool):
    if not values:
        raise _ExecError("IndexOutOfBounds", "empty list")
    best = values[0]
    for x in values:
        if (x > best) if want_max else (x < best):
            best = x
    return Scalar(Number(best))


def _t_arg_extreme(column: Column, want_max: bool):
    values = _column_numbers(column)
    if not values:
        raise _ExecError("IndexOutOfBounds", "empty column")
    best = 0
    for i, x in enumerate(values):
        if (x > values[best]) if want_max else (x < values[best]):
            best = i
    return Scalar(Number(Decimal(best)))


def _t_filter_rows(table: Table, name: str, value):
    if name not in table.headers:
        raise _ExecError("ColumnNotFound", f"no column named {name}")
    j = table.headers.index(name)
    target = _unwrap(value)
    kept = [row for row in table.rows
            if _payloads_equal(_cell_payload(row[j]), target)]
    return TableV(Table(table.caption, table.headers, kept))


def _t_linear_regression(xs: list, ys: list):
    if len(xs) != len(ys):
        raise _ExecError("TypeMismatch", "column lengths differ")
    n = len(xs)
    if n == 0:
        raise _ExecError("DivByZero", "empty columns")
    mean_x = sum(xs, Decimal(0)) / Decimal(n)
    mean_y = sum(ys, Decimal(0)) / Decimal(n)
    cov = Decimal(0)
    var = Decimal(0)
    for i in range(n):
        cov = cov + (xs[i] - mean_x) * (ys[i] - mean_y)
        var = var + (xs[i] - mean_x) * (xs[i] - mean_x)
    if var == 0:
        raise _ExecError("DivByZero", "zero variance")
    slope = cov / var
    return ListNum((slope, mean_y - slope * mean_x))


def _num_op(op):
    return lambda a, b: Scalar(Number(op(a, b)))


def _cmp(op):
    return lambda a, b: Bool(op(_number_of(a), _number_of(b)))


_IMPLS = {
    "get_column_by_name": _t_get_column_by_name,
    "get_column_by_index": _t_get_column_by_index,
    "get_row_by_name": _t_get_row_by_name,
    "get_row_index_by_value": _t_get_row_index_by_value,
    "get_column_cell_value": _t_get_column_cell_value,
    "extract_price": _t_extract_price,
    "add": _num_op(lambda a, b: a + b),
    "subtract": _num_op(lambda a, b: a - b),
    "multiply": _num_op(lambda a, b: a * b),
    "divide": _t_divide,
    "sum": lambda values: Scalar(Number(sum(values, Decimal(0)))),
    "average": _t_average,
    "min": lambda values: _t_extreme(values, False),
    "max": lambda values: _t_extreme(values, True),
    "count": lambda values: Scalar(Number(Decimal(len(values)))),
    "argmax": lambda column: _t_arg_extreme(column, True),
    "argmin": lambda column: _t_arg_extreme(column, False),
    "equal_to": lambda a, b: Bool(_values_equal(a, b)),
    "greater_than": _cmp(lambda a, b: a > b),
    "less_than": _cmp(lambda a, b: a < b),
    "filter_rows": _t_filter_rows,
    "linear_regression": _t_linear_regression,
}


def _lit_value(lit: Lit):
    if isinstance(lit.value, tuple):
        inner = [x.value for x in lit.value]
        if all(isinstance(v, Decimal) for v in inner):
            return ListNum(tuple(inner))
        # string/bool array literals: only usable where "any" is accepted
        return _ArrayV(tuple(inner))
    if isinstance(lit.value, bool):
        return Bool(lit.value)
    if isinstance(lit.value, Decimal):
        return Scalar(Number(lit.value))
    return Str(lit.value)


def execute_plan(plan: Plan, table: Table, registry: Registry | None = None) -> RunOutcome:
    registry = registry or builtin_registry()
    env = {"table_data": TableV(table)}
    trace = []

    def resolve(expr):
        if isinstance(expr, VarRef):
            if expr.name not in env:
                raise _ExecError("UnboundVariable", f"variable {expr.name} not bound")
            return env[expr.name]
        return _lit_value(expr)

    for ordinal, step in enumerate(plan.steps, start=1):
        try:
            if ordinal > STEP_BUDGET:
                raise _ExecError("StepBudgetExceeded", f"more than {STEP_BUDGET} steps")
            spec = registry.lookup(step.tool)
            if spec is None:
                raise _ExecError("UnknownTool", f"unknown tool {step.tool}")
            if len(step.args) != len(spec.params):
                raise _ExecError(
                    "ArityMismatch",
                    f"{spec.name} takes {len(spec.params)} args, got {len(step.args)}")
            coerced = [_coerce(resolve(arg), kind)
                       for arg, (_, kind) in zip(step.args, spec.params)]
            result = _IMPLS[spec.name](*coerced)
        except _ExecError as err:
            return RunOutcome(
                "", False, False, tuple(trace), (step.index, err.kind, err.message))
        env[step.var] = result
        args_text = ", ".join(render_arg(a) for a in step.args)
        trace.append((step.index, spec.name, args_text, render_value(result)))
    try:
        answer = render_value(resolve(plan.answer))
    except _ExecError as err:
        return RunOutcome("", False, False, tuple(trace), (None, err.kind, err.message))
    return RunOutcome(answer, True, False, tuple(trace), None)


def _fallback(outcome_so_far: RunOutcome, record, table, gateway) -> RunOutcome:
    """CoT fallback: ask for a reasoned answer and keep whatever diagnostics
    the failed plan attempt produced. A second gateway failure leaves the
    answer empty; the record simply scores as incorrect."""
    from .gateway import GatewayError, build_cot_prompt, extract_final_answer

    try:
        reply = gateway.complete(build_cot_prompt(table, record.query))
        answer = extract_final_answer(reply)
    except GatewayError:
        answer = ""
    return RunOutcome(answer, False, True,
                      outcome_so_far.trace, outcome_so_far.error)


def run_tart(record, config, gateway) -> RunOutcome:
    """Full pipeline for one record: format the table, ask for a program,
    map its helpers onto builtins, linearize, validate, execute. Any
    non-executable outcome switches to the CoT answer with fallback_used set.

    record supplies .table and .query; config supplies .formatter_mode.
    """
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

    try:
        table, _ = format_table(record.table, record.query,
                                mode=config.formatter_mode, gateway=gateway)
    except GatewayError:
        # formatting must not sink the record; the rule engine always works
        table, _ = format_table(record.table, record.query)

    nothing = RunOutcome("", False, False, (), None)
    registry = builtin_registry()

    try:
        reply = gateway.complete(build_toolmaker_prompt(table, record.query))
    except GatewayError as err:
        failed = replace(nothing, error=(None, "GatewayError", str(err)))
        return _fallback(failed, record, table, gateway)

    try:
        tools, solution = parse_toolmaker_output(reply)
        plan = linearize_program(solution)
    except NoSolutionFound as err:
        failed = replace(nothing, error=(None, "NoSolutionFound", str(err)))
        return _fallback(failed, record, table, gateway)
    except NonLinearizable as err:
        failed = replace(nothing, error=(None, "NonLinearizable", err.reason))
        return _fallback(failed, record, table, gateway)

    renames = {}
    for tool in tools:
        mapped = register_generated(tool, registry)
        if isinstance(mapped, MappedTo):
            renames[tool.name] = mapped.name
    if renames:
        plan = replace(plan, steps=tuple(
            replace(step, tool=renames.get(step.tool, step.tool))
            for step in plan.steps))

    if has_errors(validate_plan(plan, registry)):
        failed = replace(nothing, error=(None, "PlanInvalid", "plan failed validation"))
        return _fallback(failed, record, table, gateway)

    outcome = execute_plan(plan, table, registry)
    if outcome.executable:
        return outcome
    return _fallback(outcome, record, table, gateway)
