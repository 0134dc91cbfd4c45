import datetime
import json
import random
from decimal import Decimal

import pytest

from genutil import random_exec_plan, random_exec_table
from oracle import oracle_run
from tabrex.execution import RunOutcome, execute_plan, render_value
from tabrex.execution import Bool, Column, ListNum, Scalar, Str, TableV
from tabrex.plan import Lit, Plan, Step, VarRef, parse_plan
from tabrex.table import (
    MISSING, Currency, Date, Number, Percent, Table, Text, serialize_canonical,
)

D = Decimal


def num_table(headers, grid, caption=""):
    rows = [[Number(D(str(x))) for x in row] for row in grid]
    return Table(caption, headers, rows)


SALES = Table("", ("city", "units", "price"), [
    (Text("Oslo"), Number(D(4)), Text("$2.50")),
    (Text("Lima"), Number(D(10)), Text("$1.00")),
    (Text("Oslo"), Number(D(6)), Text("$3.00")),
])


def run(text, table=SALES):
    return execute_plan(parse_plan(text), table)


class TestHappyPath:
    def test_column_then_sum(self):
        out = run('c = get_column_by_name(table_data, "units")\ns = sum(c)\nANSWER = s')
        assert out.answer == "20"
        assert out.executable and not out.fallback_used and out.error is None
        assert out.trace == (
            (1, "get_column_by_name", 'table_data, "units"', "[4, 10, 6]"),
            (2, "sum", "c", "20"),
        )

    def test_literal_answer(self):
        out = run("x = add(1, 2)\nANSWER = 7")
        assert out.answer == "7"
        assert out.trace[0] == (1, "add", "1, 2", "3")

    def test_alias_and_camel_case_resolve_to_canonical_in_trace(self):
        out = run('c = getColumnByName(table_data, "units")\nm = mean(c)\nANSWER = m')
        assert [t[1] for t in out.trace] == ["get_column_by_name", "average"]
        assert out.answer == "6.666666666666666666666666667"

    def test_stepless_plan_returns_serialized_table(self):
        table = num_table(("a",), [[1], [2]])
        out = execute_plan(Plan((), VarRef("table_data")), table)
        assert out.answer == serialize_canonical(table)
        assert out.executable and out.trace == ()

    def test_bool_answer(self):
        out = run("f = equal_to(2, 2)\nANSWER = f")
        assert out.answer == "yes"

    def test_row_lookup_and_cell(self):
        text = ('r = get_row_by_name(table_data, "Lima")\n'
                'c = get_column_by_name(table_data, "units")\n'
                'i = get_row_index_by_value(c, 10)\n'
                'v = get_column_cell_value(c, i)\n'
                "ANSWER = v")
        out = run(text)
        assert out.answer == "10"
        assert out.trace[0][3] == "[Lima, 10, $1.00]"
        assert out.trace[2][3] == "1"

    def test_filter_rows_returns_table(self):
        out = run('f = filter_rows(table_data, "city", "Oslo")\n'
                  'c = get_column_by_name(f, "units")\nANSWER = c')
        assert out.answer == "[4, 6]"

    def test_filter_rows_can_empty_out(self):
        out = run('f = filter_rows(table_data, "city", "Quito")\nANSWER = f')
        assert out.answer == '[["city", "units", "price"]]'

    def test_extract_price(self):
        out = run('p = extract_price("$12.50")\nANSWER = p')
        assert out.answer == "12.5"

    def test_linear_regression(self):
        table = num_table(("x", "y"), [[1, 2], [2, 4], [3, 6]])
        out = run('xs = get_column_by_name(table_data, "x")\n'
                  'ys = get_column_by_name(table_data, "y")\n'
                  "r = linear_regression(xs, ys)\nANSWER = r", table)
        assert out.answer == "[2, 0]"

    def test_min_max_count(self):
        out = run("a = min([3, 1, 2])\nb = max([3, 1, 2])\nc = count([])\n"
                  "f = equal_to(a, 1)\nANSWER = b")
        assert out.answer == "3"
        assert out.trace[2][3] == "0"
        assert out.trace[3][3] == "yes"

    def test_argmax_argmin(self):
        out = run('c = get_column_by_name(table_data, "units")\n'
                  "i = argmax(c)\nj = argmin(c)\nANSWER = i")
        assert out.answer == "1"
        assert out.trace[2][3] == "0"

    def test_comparisons(self):
        out = run("a = greater_than(3, 2)\nb = less_than(3, 2)\nANSWER = b")
        assert out.trace[0][3] == "yes"
        assert out.answer == "no"


class TestCoercion:
    def test_text_prices_sum_after_cleaning(self):
        out = run('p = get_column_by_name(table_data, "price")\ns = sum(p)\nANSWER = s')
        assert out.answer == "6.5"

    def test_percent_uses_magnitude(self):
        table = Table("", ("g",), [(Percent(D("45")),), (Percent(D("5")),)])
        out = run('c = get_column_by_name(table_data, "g")\ns = sum(c)\nANSWER = s', table)
        assert out.answer == "50"

    def test_currency_uses_amount(self):
        table = Table("", ("p",), [(Currency(D("2"), "$"),), (Currency(D("3"), "$"),)])
        out = run('c = get_column_by_name(table_data, "p")\na = average(c)\nANSWER = a', table)
        assert out.answer == "2.5"

    def test_non_numeric_text_is_type_mismatch(self):
        out = run('c = get_column_by_name(table_data, "city")\ns = sum(c)\nANSWER = s')
        assert out.error[:2] == (2, "TypeMismatch")

    def test_plan_string_is_not_a_number(self):
        out = run('x = add("5", 1)\nANSWER = x')
        assert out.error[:2] == (1, "TypeMismatch")

    def test_date_cell_compares_as_iso_text(self):
        table = Table("", ("d",), [(Date(datetime.date(2015, 3, 14)),)])
        out = run('c = get_column_by_name(table_data, "d")\n'
                  "v = get_column_cell_value(c, 0)\n"
                  'f = equal_to(v, "2015-03-14")\nANSWER = f', table)
        assert out.answer == "yes"

    def test_missing_equals_only_missing(self):
        table = Table("", ("a", "b"), [(MISSING, MISSING), (MISSING, Text(""))])
        out = run('c = get_column_by_name(table_data, "a")\n'
                  'd = get_column_by_name(table_data, "b")\n'
                  "x = get_column_cell_value(c, 0)\n"
                  "y = get_column_cell_value(d, 0)\n"
                  "z = get_column_cell_value(d, 1)\n"
                  "p = equal_to(x, y)\nq = equal_to(x, z)\nANSWER = q", table)
        assert out.trace[5][3] == "yes"
        assert out.answer == "no"

    def test_bool_never_equals_number(self):
        out = run("f = equal_to(true, 1)\nANSWER = f")
        assert out.answer == "no"


class TestErrors:
    def test_unknown_tool(self):
        out = run("x = frobnicate(1)\nANSWER = x")
        assert out.error[:2] == (1, "UnknownTool")
        assert out.answer == "" and not out.executable and out.trace == ()

    def test_arity_mismatch(self):
        out = run("x = add(1)\nANSWER = x")
        assert out.error[:2] == (1, "ArityMismatch")

    def test_arity_checked_before_argument_binding(self):
        out = run("x = add(ghost)\nANSWER = x")
        assert out.error[1] == "ArityMismatch"

    def test_column_not_found(self):
        out = run('c = get_column_by_name(table_data, "zz")\nANSWER = c')
        assert out.error[:2] == (1, "ColumnNotFound")

    def test_row_not_found(self):
        out = run('r = get_row_by_name(table_data, "Quito")\nANSWER = r')
        assert out.error[:2] == (1, "RowNotFound")

    def test_value_not_in_column(self):
        out = run('c = get_column_by_name(table_data, "units")\n'
                  "i = get_row_index_by_value(c, 99)\nANSWER = i")
        assert out.error[:2] == (2, "RowNotFound")
        assert len(out.trace) == 1

    def test_index_out_of_bounds(self):
        out = run('c = get_column_by_name(table_data, "units")\n'
                  "v = get_column_cell_value(c, 99)\nANSWER = v")
        assert out.error[:2] == (2, "IndexOutOfBounds")

    def test_negative_index_rejected(self):
        out = run('c = get_column_by_name(table_data, "units")\n'
                  "v = get_column_cell_value(c, -1)\nANSWER = v")
        assert out.error[:2] == (2, "IndexOutOfBounds")

    def test_fractional_index_is_type_mismatch(self):
        out = run('c = get_column_by_name(table_data, "units")\n'
                  "v = get_column_cell_value(c, 1.5)\nANSWER = v")
        assert out.error[:2] == (2, "TypeMismatch")

    def test_div_by_zero(self):
        out = run("x = divide(1, 0)\nANSWER = x")
        assert out.error[:2] == (1, "DivByZero")

    def test_average_of_empty(self):
        out = run("x = average([])\nANSWER = x")
        assert out.error[:2] == (1, "DivByZero")

    def test_min_of_empty(self):
        out = run("x = min([])\nANSWER = x")
        assert out.error[:2] == (1, "IndexOutOfBounds")

    def test_unbound_variable(self):
        out = run("x = sum(ghost)\nANSWER = x")
        assert out.error[:2] == (1, "UnboundVariable")

    def test_unbound_answer_reports_no_step(self):
        out = run("x = add(1, 2)\nANSWER = ghost")
        assert out.error[:2] == (None, "UnboundVariable")
        assert len(out.trace) == 1 and out.answer == ""

    def test_linear_regression_zero_variance(self):
        table = num_table(("x", "y"), [[2, 1], [2, 5]])
        out = run('xs = get_column_by_name(table_data, "x")\n'
                  'ys = get_column_by_name(table_data, "y")\n'
                  "r = linear_regression(xs, ys)\nANSWER = r", table)
        assert out.error[:2] == (3, "DivByZero")

    def test_bad_price_text(self):
        out = run('p = extract_price("n/a")\nANSWER = p')
        assert out.error[:2] == (1, "TypeMismatch")

    def test_step_budget(self):
        steps = tuple(Step(i, f"v{i}", "add", (Lit(D(1)), Lit(D(1)))) for i in range(1, 66))
        out = execute_plan(Plan(steps, VarRef("v1")), SALES)
        assert out.error[:2] == (65, "StepBudgetExceeded")
        assert len(out.trace) == 64

    def test_first_failing_arg_wins(self):
        out = run('c = get_column_by_name(table_data, "units")\n'
                  "x = divide(c, ghost)\nANSWER = x")
        assert out.error[:2] == (2, "TypeMismatch")


class TestRunOutcomeSerialization:
    def test_dict_shape_and_stable_json(self):
        out = run("s = add(2, 3)\nANSWER = s")
        data = out.to_dict()
        assert list(data) == ["answer", "error", "executable", "fallback_used", "trace"]
        blob = json.dumps(data, sort_keys=True)
        assert json.loads(blob) == {
            "answer": "5", "error": None, "executable": True,
            "fallback_used": False,
            "trace": [{"args": "2, 3", "result": "5", "step": 1, "tool": "add"}],
        }

    def test_error_dict(self):
        out = run("x = divide(1, 0)\nANSWER = x")
        assert out.to_dict()["error"] == {
            "step": 1, "kind": "DivByZero", "message": "division by zero"}


class TestRenderValue:
    @pytest.mark.parametrize("value,expected", [
        (Scalar(Number(D("1250"))), "1250"),
        (Scalar(Text("Oslo")), "Oslo"),
        (Scalar(MISSING), ""),
        (Bool(True), "yes"),
        (Str("plain"), "plain"),
        (ListNum((D("1"), D("2.5"))), "[1, 2.5]"),
        (Column((Number(D(1)), Text("x")), "h"), "[1, x]"),
    ])
    def test_rendering(self, value, expected):
        assert render_value(value) == expected

    def test_table_value_renders_canonically(self):
        table = num_table(("a",), [[1]])
        assert render_value(TableV(table)) == serialize_canonical(table)


class TestOracleEquivalence:
    def check_case(self, rng):
        headers, rows = random_exec_table(rng)
        plan = random_exec_plan(rng, headers)
        table = Table("", headers, [[Number(x) for x in row] for row in rows])
        outcome = execute_plan(plan, table)
        expected = oracle_run(headers, rows, plan)
        if expected[0] == "ok":
            assert outcome.error is None, (plan, outcome.error, expected)
            assert outcome.executable
            assert outcome.answer == expected[1], (plan, outcome.answer, expected)
        else:
            assert outcome.error is not None, (plan, outcome.answer, expected)
            assert (outcome.error[0], outcome.error[1]) == expected[1], (plan, outcome.error, expected)
            assert outcome.answer == "" and not outcome.executable
        assert len(outcome.trace) == expected[2]

    def test_executor_matches_brute_force_oracle(self):
        rng = random.Random(20240311)
        for _ in range(400):
            self.check_case(rng)

    def test_determinism(self):
        rng = random.Random(5)
        headers, rows = random_exec_table(rng)
        plan = random_exec_plan(rng, headers)
        table = Table("", headers, [[Number(x) for x in row] for row in rows])
        first = execute_plan(plan, table)
        for _ in range(3):
            assert execute_plan(plan, table) == first


class ScriptedGateway:
    """Routes each prompt by its system text; a value of None raises."""

    def __init__(self, toolmaker=None, cot=None, formatter=None):
        from tabrex.gateway import COT_TASK, FORMATTER_TASK, TOOLMAKER_TASK
        self.replies = {TOOLMAKER_TASK: toolmaker, COT_TASK: cot,
                        FORMATTER_TASK: formatter}
        self.calls = []

    def complete(self, bundle):
        from tabrex.gateway import GatewayError
        self.calls.append(bundle.system)
        reply = self.replies.get(bundle.system)
        if reply is None:
            raise GatewayError("transport", "scripted outage")
        return reply


GOOD_PROGRAM = (
    "def solution(table_data):\n"
    '    units = get_column_by_name(table_data, "units")\n'
    "    total = sum(units)\n"
    "    return total"
)

COT_REPLY = "Adding the units column gives 10 + 4 + 6 = 20.\nAnswer: 42"


def tart(table=SALES, query="How many units in total?", **gateways):
    from types import SimpleNamespace

    from tabrex.execution import run_tart

    record = SimpleNamespace(table=table, query=query)
    config = SimpleNamespace(formatter_mode="rules")
    gateway = ScriptedGateway(**gateways)
    return run_tart(record, config, gateway), gateway


class TestRunTart:
    def test_golden_program_executes(self):
        out, gateway = tart(toolmaker=GOOD_PROGRAM, cot=COT_REPLY)
        assert out.answer == "20"
        assert out.executable and not out.fallback_used
        assert out.error is None
        # CoT prompt never issued
        assert gateway.calls.count(gateway.calls[0]) == len(gateway.calls) == 1

    def test_loop_program_falls_back_to_cot(self):
        program = (
            "def solution(table_data):\n"
            "    total = 0\n"
            "    for row in table_data[1:]:\n"
            "        total = total + row[1]\n"
            "    return total"
        )
        out, _ = tart(toolmaker=program, cot=COT_REPLY)
        assert out.answer == "42"
        assert not out.executable and out.fallback_used
        assert out.error[1] == "NonLinearizable"

    def test_double_outage_yields_empty_answer(self):
        out, _ = tart(toolmaker=None, cot=None)
        assert out.answer == ""
        assert not out.executable and out.fallback_used
        assert out.error[1] == "GatewayError"

    def test_toolmaker_outage_uses_cot(self):
        out, _ = tart(toolmaker=None, cot=COT_REPLY)
        assert out.answer == "42"
        assert out.fallback_used

    def test_renamed_helper_maps_to_builtin(self):
        program = (
            "def sum_all(nums):\n"
            "    acc = 0\n"
            "    for x in nums:\n"
            "        acc = acc + x\n"
            "    return acc\n"
            "\n"
            "def solution(table_data):\n"
            '    units = get_column_by_name(table_data, "units")\n'
            "    total = sum_all(units)\n"
            "    return total"
        )
        out, _ = tart(toolmaker=program, cot=COT_REPLY)
        assert out.answer == "20"
        assert out.executable
        assert out.trace[1][1] == "sum"

    def test_unmappable_helper_forces_fallback(self):
        program = (
            "def parse_weird_format(text):\n"
            '    return text.split("|")[2].strip().upper()\n'
            "\n"
            "def solution(table_data):\n"
            '    x = parse_weird_format("a|b|c")\n'
            "    return x"
        )
        out, _ = tart(toolmaker=program, cot=COT_REPLY)
        assert out.answer == "42"
        assert out.error[1] == "PlanInvalid"

    def test_prose_reply_forces_fallback(self):
        out, _ = tart(toolmaker="I am unable to write code for this.",
                      cot=COT_REPLY)
        assert out.answer == "42"
        assert out.error[1] == "NoSolutionFound"

    def test_runtime_error_keeps_trace_and_error(self):
        program = (
            "def solution(table_data):\n"
            '    units = get_column_by_name(table_data, "units")\n'
            "    total = sum(units)\n"
            "    bad = divide(total, 0)\n"
            "    return bad"
        )
        out, _ = tart(toolmaker=program, cot=COT_REPLY)
        assert out.answer == "42"
        assert not out.executable and out.fallback_used
        assert out.error == (3, "DivByZero", "division by zero")
        assert len(out.trace) == 2

    def test_formatter_outage_recovers_with_rules(self):
        from types import SimpleNamespace

        from tabrex.execution import run_tart

        record = SimpleNamespace(table=SALES, query="How many units in total?")
        config = SimpleNamespace(formatter_mode="llm")
        gateway = ScriptedGateway(toolmaker=GOOD_PROGRAM, cot=COT_REPLY,
                                  formatter=None)
        out = run_tart(record, config, gateway)
        assert out.answer == "20"
        assert out.executable
