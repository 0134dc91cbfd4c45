"""Brute-force plan evaluator used to cross-check the package executor.

Deliberately naive: plain lists and Decimals, a dict for bindings, inline
type checks per tool. It shares nothing with the real executor beyond the
Plan dataclasses it consumes and the number formatter, so agreement on
random cases is meaningful evidence rather than the same code run twice.
"""

from decimal import Decimal

from tabrex.plan import Lit, VarRef
from tabrex.table import format_decimal

_ARITY = {
    "get_column_by_name": 2,
    "get_column_cell_value": 2,
    "add": 2,
    "subtract": 2,
    "multiply": 2,
    "divide": 2,
    "sum": 1,
    "average": 1,
    "count": 1,
    "argmax": 1,
    "argmin": 1,
    "equal_to": 2,
}

# per-position expected kinds; "any" skips the check
_PARAM_KINDS = {
    "get_column_by_name": ("table", "string"),
    "get_column_cell_value": ("column", "number"),
    "add": ("number", "number"),
    "subtract": ("number", "number"),
    "multiply": ("number", "number"),
    "divide": ("number", "number"),
    "sum": ("list_number",),
    "average": ("list_number",),
    "count": ("list_number",),
    "argmax": ("column",),
    "argmin": ("column",),
    "equal_to": ("any", "any"),
}


class _Halt(Exception):
    def __init__(self, kind):
        super().__init__(kind)
        self.kind = kind


def _lit_value(lit):
    if isinstance(lit.value, tuple):
        return [_lit_value(x) for x in lit.value]
    return lit.value


def _coerce(value, kind):
    if kind == "any":
        return value
    if kind == "number":
        if isinstance(value, Decimal):
            return value
        raise _Halt("TypeMismatch")
    if kind == "string":
        if isinstance(value, str):
            return value
        raise _Halt("TypeMismatch")
    if kind == "table":
        if isinstance(value, tuple) and value and value[0] == "table":
            return value
        raise _Halt("TypeMismatch")
    if kind == "column":
        if isinstance(value, tuple) and value and value[0] == "col":
            return value
        raise _Halt("TypeMismatch")
    if kind == "list_number":
        if isinstance(value, tuple) and value and value[0] == "col":
            return list(value[1])
        if isinstance(value, list):
            if all(isinstance(x, Decimal) for x in value):
                return value
            raise _Halt("TypeMismatch")
        raise _Halt("TypeMismatch")
    raise AssertionError(kind)


def _unwrap(value):
    if isinstance(value, tuple) and value and value[0] == "col":
        return list(value[1])
    if isinstance(value, tuple) and value and value[0] == "table":
        return [list(value[1])] + [list(r) for r in value[2]]
    return value


def _equal(a, b):
    a, b = _unwrap(a), _unwrap(b)
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a is b
    if isinstance(a, Decimal) and isinstance(b, Decimal):
        return a == b
    if isinstance(a, str) and isinstance(b, str):
        return a == b
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(_equal(x, y) for x, y in zip(a, b))
    return False


def _apply(tool, args):
    if tool == "get_column_by_name":
        table, name = args
        headers, rows = table[1], table[2]
        if name not in headers:
            raise _Halt("ColumnNotFound")
        j = headers.index(name)
        return ("col", [row[j] for row in rows])
    if tool == "get_column_cell_value":
        col, index = args
        if index != index.to_integral_value():
            raise _Halt("TypeMismatch")
        i = int(index)
        if i < 0 or i >= len(col[1]):
            raise _Halt("IndexOutOfBounds")
        return col[1][i]
    if tool == "add":
        return args[0] + args[1]
    if tool == "subtract":
        return args[0] - args[1]
    if tool == "multiply":
        return args[0] * args[1]
    if tool == "divide":
        if args[1] == 0:
            raise _Halt("DivByZero")
        return args[0] / args[1]
    if tool == "sum":
        total = Decimal(0)
        for x in args[0]:
            total = total + x
        return total
    if tool == "average":
        if not args[0]:
            raise _Halt("DivByZero")
        total = Decimal(0)
        for x in args[0]:
            total = total + x
        return total / Decimal(len(args[0]))
    if tool == "count":
        return Decimal(len(args[0]))
    if tool in ("argmax", "argmin"):
        values = args[0][1]
        if not values:
            raise _Halt("IndexOutOfBounds")
        best = 0
        for i, x in enumerate(values):
            if (x > values[best]) if tool == "argmax" else (x < values[best]):
                best = i
        return Decimal(best)
    if tool == "equal_to":
        return _equal(args[0], args[1])
    raise AssertionError(tool)


def _render(value):
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, Decimal):
        return format_decimal(value)
    if isinstance(value, str):
        return value
    if isinstance(value, tuple) and value and value[0] == "col":
        return "[" + ", ".join(_render(x) for x in value[1]) + "]"
    if isinstance(value, list):
        return "[" + ", ".join(_render(x) for x in value) + "]"
    raise AssertionError(type(value))


def oracle_run(headers, rows, plan):
    """Returns ("ok", answer_text, steps_run) or
    ("error", (step_index_or_None, kind), steps_run)."""
    env = {"table_data": ("table", list(headers), [list(r) for r in rows])}

    def resolve(expr):
        if isinstance(expr, VarRef):
            if expr.name not in env:
                raise _Halt("UnboundVariable")
            return env[expr.name]
        return _lit_value(expr)

    executed = 0
    for step in plan.steps:
        try:
            if step.tool not in _ARITY:
                raise _Halt("UnknownTool")
            if len(step.args) != _ARITY[step.tool]:
                raise _Halt("ArityMismatch")
            values = [_coerce(resolve(a), k)
                      for a, k in zip(step.args, _PARAM_KINDS[step.tool])]
            env[step.var] = _apply(step.tool, values)
        except _Halt as halt:
            return ("error", (step.index, halt.kind), executed)
        executed += 1
    try:
        answer = resolve(plan.answer)
    except _Halt as halt:
        return ("error", (None, halt.kind), executed)
    return ("ok", _render(answer), executed)
