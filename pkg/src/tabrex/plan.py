"""Reasoning-plan DSL: parser, validator, printer, and program linearizer.

A plan is a sequence of single-assignment tool calls ending in an ANSWER
line:

    col = get_column_by_name(table_data, "sales")
    best = argmax(col)
    ANSWER = best

`table_data` names the input table and cannot be assigned. Step indices are
1-based and follow source order; explanation references ("###<line>") rely
on that numbering staying stable, which is also why nested calls are
rejected instead of auto-flattened.
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass
from decimal import Decimal

from .table import format_decimal

TABLE_VAR = "table_data"
ANSWER_WORD = "ANSWER"

_RESERVED_LITERALS = ("true", "false")


class PlanSyntaxError(Exception):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class MissingAnswer(Exception):
    def __init__(self):
        super().__init__("plan has no ANSWER line")


class NonLinearizable(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class Lit:
    value: object  # Decimal | str | bool | tuple of Lit


@dataclass(frozen=True)
class VarRef:
    name: str


ArgExpr = Lit | VarRef


@dataclass(frozen=True)
class Step:
    index: int
    var: str
    tool: str
    args: tuple


@dataclass(frozen=True)
class Plan:
    steps: tuple
    answer: ArgExpr


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    step: int | None  # step index; None means the ANSWER line
    message: str


_RE_NUMBER = re.compile(r"-?(?:\d+(?:\.\d*)?|\.\d+)")
_RE_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _tokenize(line: str, line_no: int) -> list:
    tokens = []
    i = 0
    n = len(line)
    while i < n:
        c = line[i]
        if c in " \t":
            i += 1
            continue
        if c == "#":
            break
        if c == '"':
            j = i + 1
            while j < n and line[j] != '"':
                j += 2 if line[j] == "\\" else 1
            if j >= n:
                raise PlanSyntaxError(line_no, "unterminated string")
            try:
                value = json.loads(line[i:j + 1])
            except ValueError:
                raise PlanSyntaxError(line_no, "bad string literal") from None
            tokens.append(("STRING", value))
            i = j + 1
            continue
        if c.isdigit() or c == "." or (c == "-" and i + 1 < n and (line[i + 1].isdigit() or line[i + 1] == ".")):
            m = _RE_NUMBER.match(line, i)
            if not m:
                raise PlanSyntaxError(line_no, f"unexpected character {c!r}")
            tokens.append(("NUMBER", Decimal(m.group())))
            i = m.end()
            continue
        m = _RE_IDENT.match(line, i)
        if m:
            tokens.append(("IDENT", m.group()))
            i = m.end()
            continue
        if c in "()[]=,":
            tokens.append((c, c))
            i += 1
            continue
        raise PlanSyntaxError(line_no, f"unexpected character {c!r}")
    return tokens


class _LineParser:
    def __init__(self, tokens: list, line_no: int):
        self.tokens = tokens
        self.line_no = line_no
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else (None, None)

    def take(self, kind: str):
        tok_kind, value = self.peek()
        if tok_kind != kind:
            raise PlanSyntaxError(self.line_no, f"expected {kind}, found {value!r}")
        self.pos += 1
        return value

    def at_end(self) -> bool:
        return self.pos >= len(self.tokens)

    def expect_end(self):
        if not self.at_end():
            raise PlanSyntaxError(self.line_no, f"trailing input: {self.peek()[1]!r}")

    def parse_scalar_literal(self):
        kind, value = self.peek()
        if kind == "NUMBER":
            self.pos += 1
            return Lit(value)
        if kind == "STRING":
            self.pos += 1
            return Lit(value)
        if kind == "IDENT" and value in _RESERVED_LITERALS:
            self.pos += 1
            return Lit(value == "true")
        return None

    def parse_expr(self) -> ArgExpr:
        lit = self.parse_scalar_literal()
        if lit is not None:
            return lit
        kind, value = self.peek()
        if kind == "[":
            self.pos += 1
            items = []
            while self.peek()[0] != "]":
                if items:
                    self.take(",")
                item = self.parse_scalar_literal()
                if item is None:
                    raise PlanSyntaxError(self.line_no, "array literals hold literals only")
                items.append(item)
            self.take("]")
            kinds = {type(i.value) for i in items}
            if len(kinds) > 1:
                raise PlanSyntaxError(self.line_no, "array literals must be homogeneous")
            return Lit(tuple(items))
        if kind == "IDENT":
            if value == ANSWER_WORD:
                raise PlanSyntaxError(self.line_no, "ANSWER is a reserved word")
            self.pos += 1
            return VarRef(value)
        raise PlanSyntaxError(self.line_no, f"expected expression, found {value!r}")


def parse_plan(text: str) -> Plan:
    """Parse DSL text into a Plan. `#` comments and blank lines are skipped;
    step indices count steps, not raw source lines."""
    steps = []
    answer = None
    answer_line = None
    seen = set()
    for line_no, raw in enumerate(text.splitlines(), 1):
        tokens = _tokenize(raw, line_no)
        if not tokens:
            continue
        parser = _LineParser(tokens, line_no)
        head = parser.take("IDENT")
        if head == ANSWER_WORD:
            if answer is not None:
                raise PlanSyntaxError(line_no, "duplicate ANSWER")
            parser.take("=")
            answer = parser.parse_expr()
            parser.expect_end()
            answer_line = line_no
            continue
        if answer is not None:
            raise PlanSyntaxError(line_no, "statement after ANSWER")
        if head == TABLE_VAR:
            raise PlanSyntaxError(line_no, f"cannot assign to reserved variable {TABLE_VAR}")
        if head in _RESERVED_LITERALS:
            raise PlanSyntaxError(line_no, f"{head} is a reserved word")
        if head in seen:
            raise PlanSyntaxError(line_no, f"variable reassigned: {head}")
        parser.take("=")
        tool = parser.take("IDENT")
        if tool == ANSWER_WORD or tool in _RESERVED_LITERALS:
            raise PlanSyntaxError(line_no, f"{tool} is a reserved word")
        parser.take("(")
        args = []
        while parser.peek()[0] != ")":
            if args:
                parser.take(",")
            args.append(parser.parse_expr())
        parser.take(")")
        parser.expect_end()
        steps.append(Step(len(steps) + 1, head, tool, tuple(args)))
        seen.add(head)
    if answer is None:
        raise MissingAnswer()
    if not steps:
        raise PlanSyntaxError(answer_line, "expected at least one step before ANSWER")
    return Plan(tuple(steps), answer)


def _render_lit(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Decimal):
        return format_decimal(value)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, tuple):
        return "[" + ", ".join(_render_lit(item.value) for item in value) + "]"
    raise TypeError(f"unrenderable literal: {value!r}")


def render_arg(arg: ArgExpr) -> str:
    if isinstance(arg, VarRef):
        return arg.name
    return _render_lit(arg.value)


def render_plan(plan: Plan) -> str:
    """Canonical text form; parse_plan(render_plan(p)) reproduces p."""
    lines = [
        f"{step.var} = {step.tool}({', '.join(render_arg(a) for a in step.args)})"
        for step in plan.steps
    ]
    lines.append(f"{ANSWER_WORD} = {render_arg(plan.answer)}")
    return "\n".join(lines)


def _iter_refs(arg: ArgExpr):
    if isinstance(arg, VarRef):
        yield arg.name


def validate_plan(plan: Plan, registry) -> list:
    """Static checks against a tool registry (anything with lookup(name)).

    Error diagnostics mean the plan cannot execute; UnusedVar is a warning.
    Argument kinds are not checked here; kind errors surface at run time.
    """
    diags = []
    defined = {TABLE_VAR}
    used = set()
    for step in plan.steps:
        for arg in step.args:
            for name in _iter_refs(arg):
                used.add(name)
                if name not in defined:
                    diags.append(Diagnostic(
                        "error", "UseBeforeDef", step.index,
                        f"{name} referenced before definition"))
        spec = registry.lookup(step.tool)
        if spec is None:
            diags.append(Diagnostic(
                "error", "UnknownTool", step.index, f"unknown tool {step.tool}"))
        elif len(step.args) != len(spec.params):
            diags.append(Diagnostic(
                "error", "ArityMismatch", step.index,
                f"{step.tool} takes {len(spec.params)} args, got {len(step.args)}"))
        defined.add(step.var)
    for name in _iter_refs(plan.answer):
        used.add(name)
        if name not in defined:
            diags.append(Diagnostic(
                "error", "UseBeforeDef", None, f"{name} referenced before definition"))
    for step in plan.steps:
        if step.var not in used:
            diags.append(Diagnostic(
                "warning", "UnusedVar", step.index, f"{step.var} is never used"))
    return diags


def has_errors(diagnostics: list) -> bool:
    return any(d.severity == "error" for d in diagnostics)


def _lit_from_constant(value):
    if isinstance(value, bool):
        return Lit(value)
    if isinstance(value, (int, float)):
        return Lit(Decimal(str(value)))
    if isinstance(value, str):
        return Lit(value)
    raise NonLinearizable("unsupported-arg")


def _arg_from_node(node: ast.expr, rename: dict) -> ArgExpr:
    if isinstance(node, ast.Constant):
        return _lit_from_constant(node.value)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub) \
            and isinstance(node.operand, ast.Constant) \
            and isinstance(node.operand.value, (int, float)) \
            and not isinstance(node.operand.value, bool):
        return Lit(-Decimal(str(node.operand.value)))
    if isinstance(node, ast.Name):
        return VarRef(rename.get(node.id, node.id))
    if isinstance(node, (ast.List, ast.Tuple)):
        items = []
        for element in node.elts:
            item = _arg_from_node(element, rename)
            if not isinstance(item, Lit) or isinstance(item.value, tuple):
                raise NonLinearizable("unsupported-arg")
            items.append(item)
        kinds = {type(i.value) for i in items}
        if len(kinds) > 1:
            raise NonLinearizable("unsupported-arg")
        return Lit(tuple(items))
    if isinstance(node, ast.Call):
        raise NonLinearizable("nested-call")
    raise NonLinearizable("unsupported-arg")


def _is_docstring(node: ast.stmt) -> bool:
    return (isinstance(node, ast.Expr)
            and isinstance(node.value, ast.Constant)
            and isinstance(node.value.value, str))


def linearize_program(source: str) -> Plan:
    """Map a generated `solution` function body onto a Plan.

    Only straight-line single-assignment call statements plus a final
    return of a bare name or literal qualify; the first parameter is
    renamed to table_data. Anything else raises NonLinearizable with a
    short reason string, and the caller treats that as a fallback trigger.
    """
    try:
        tree = ast.parse(source)
    except SyntaxError:
        raise NonLinearizable("python-syntax") from None
    fn = None
    for node in tree.body:
        if isinstance(node, ast.FunctionDef) and node.name == "solution":
            fn = node
    if fn is None:
        raise NonLinearizable("no-solution")
    params = [a.arg for a in fn.args.posonlyargs + fn.args.args]
    rename = {params[0]: TABLE_VAR} if params else {}
    steps = []
    answer = None
    defined = {TABLE_VAR}
    body = fn.body
    for idx, node in enumerate(body):
        if _is_docstring(node):
            continue
        if isinstance(node, ast.Return):
            if idx != len(body) - 1:
                raise NonLinearizable("return-not-final")
            if node.value is None:
                raise NonLinearizable("missing-return")
            answer = _try_answer(node.value, rename)
        elif isinstance(node, ast.Assign):
            if len(node.targets) != 1 or not isinstance(node.targets[0], ast.Name):
                raise NonLinearizable("unsupported-statement")
            target = rename.get(node.targets[0].id, node.targets[0].id)
            if target in defined:
                raise NonLinearizable("reassignment")
            call = node.value
            if not isinstance(call, ast.Call):
                raise NonLinearizable("non-call-assignment")
            if not isinstance(call.func, ast.Name):
                raise NonLinearizable("method-call")
            if call.keywords:
                raise NonLinearizable("unsupported-arg")
            args = tuple(_arg_from_node(a, rename) for a in call.args)
            steps.append(Step(len(steps) + 1, target, call.func.id, args))
            defined.add(target)
        elif isinstance(node, (ast.For, ast.While, ast.AsyncFor)):
            raise NonLinearizable("loop")
        elif isinstance(node, ast.If):
            raise NonLinearizable("conditional")
        elif isinstance(node, ast.AugAssign):
            raise NonLinearizable("reassignment")
        else:
            raise NonLinearizable("unsupported-statement")
    if answer is None:
        raise NonLinearizable("missing-return")
    if not steps:
        raise NonLinearizable("no-steps")
    return Plan(tuple(steps), answer)


def _try_answer(node: ast.expr, rename: dict) -> ArgExpr:
    try:
        return _arg_from_node(node, rename)
    except NonLinearizable:
        raise NonLinearizable("return-expression") from None
