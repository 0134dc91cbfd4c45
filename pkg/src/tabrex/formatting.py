"""Deterministic table formatter: cell cleaning, value standardization, header repair.

The rule engine is the default formatting mode and doubles as the validator
for LLM-produced tables ("rules win" on any disagreement). All operations
preserve the table's shape and are idempotent; ambiguous dates are reported,
never guessed.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal

from .table import (
    Currency,
    Date,
    Missing,
    Number,
    Percent,
    Table,
    Text,
    parse_cell,
    parse_table,
)

import datetime


@dataclass
class FormatReport:
    """Audit trail: what the formatter actually rewrote.

    Counts cover rewritten cells only, so a second pass over formatted
    output reports zeros. Ambiguous dates are re-detected on every pass
    (they are diagnostics, not rewrites).
    """

    cleaned_cells: int = 0
    standardized_cells: int = 0
    repaired_headers: list[tuple[int, str]] = field(default_factory=list)
    stripped_symbols: Counter = field(default_factory=Counter)
    ambiguous_dates: list[tuple[int, int]] = field(default_factory=list)

    def merge(self, other: "FormatReport") -> "FormatReport":
        return FormatReport(
            cleaned_cells=self.cleaned_cells + other.cleaned_cells,
            standardized_cells=self.standardized_cells + other.standardized_cells,
            repaired_headers=self.repaired_headers + other.repaired_headers,
            stripped_symbols=self.stripped_symbols + other.stripped_symbols,
            ambiguous_dates=self.ambiguous_dates + other.ambiguous_dates,
        )

    def to_dict(self) -> dict:
        return {
            "cleaned_cells": self.cleaned_cells,
            "standardized_cells": self.standardized_cells,
            "repaired_headers": [[j, name] for j, name in self.repaired_headers],
            "stripped_symbols": dict(sorted(self.stripped_symbols.items())),
            "ambiguous_dates": [[i, j] for i, j in self.ambiguous_dates],
        }


_RE_FOOTNOTE = re.compile(r"(?:\s*(?:\*|†|‡|\[\d+\]))+$")
_RE_SUPERSCRIPT = re.compile(r"(?<=\d)[a-e]$")


def _strip_footnotes(text: str) -> str:
    prev = None
    while text != prev:
        prev = text
        text = _RE_FOOTNOTE.sub("", text).rstrip()
        text = _RE_SUPERSCRIPT.sub("", text)
    return text


def _clean_one(cell):
    """Returns (new_cell, symbol_or_None) or None when the cell is untouched."""
    if isinstance(cell, Currency):
        return Number(cell.amount), cell.symbol
    if not isinstance(cell, Text):
        return None
    base = cell.value.strip()
    work = _strip_footnotes(base)
    if not work:
        return None
    reparsed = parse_cell(work)
    if isinstance(reparsed, Currency):
        return Number(reparsed.amount), reparsed.symbol
    if isinstance(reparsed, (Number, Percent, Date)):
        return reparsed, None
    if work != base:
        return Text(work), None
    return None


def clean_cells(table: Table) -> tuple[Table, FormatReport]:
    """Rewrite currency to bare numbers, strip footnote markers and thousands
    separators. Cells that resist cleaning are left as Text."""
    report = FormatReport()
    rows = []
    for row in table.rows:
        out = []
        for cell in row:
            cleaned = _clean_one(cell)
            if cleaned is None:
                out.append(cell)
            else:
                new_cell, symbol = cleaned
                out.append(new_cell)
                report.cleaned_cells += 1
                if symbol is not None:
                    report.stripped_symbols[symbol] += 1
        rows.append(out)
    return Table(table.caption, table.headers, rows), report


_MONTHS = {
    name: i + 1
    for i, name in enumerate(
        ["january", "february", "march", "april", "may", "june",
         "july", "august", "september", "october", "november", "december"]
    )
}
_MONTHS.update({name[:3]: num for name, num in list(_MONTHS.items())})
_MONTHS["sept"] = 9

_RE_SLASH_DATE = re.compile(r"^(\d{1,2})/(\d{1,2})/(\d{4})$")
_RE_MONTH_D_YEAR = re.compile(r"^([A-Za-z]+)\.?\s+(\d{1,2}),\s*(\d{4})$")
_RE_D_MON_YEAR = re.compile(r"^(\d{1,2})\s+([A-Za-z]+)\.?\s+(\d{4})$")

_AMBIGUOUS = object()


def _try_date(value: datetime.date | None, year: int, month: int, day: int):
    try:
        return datetime.date(year, month, day)
    except ValueError:
        return None


def parse_date_flexible(text: str):
    """Parse the accepted date formats; returns a date, None, or the ambiguity
    marker when MM/DD and DD/MM readings are both valid and differ."""
    s = text.strip()
    parsed = parse_cell(s)
    if isinstance(parsed, Date):
        return parsed.value
    m = _RE_SLASH_DATE.match(s)
    if m:
        a, b, year = int(m.group(1)), int(m.group(2)), int(m.group(3))
        as_month_day = _try_date(None, year, a, b)
        as_day_month = _try_date(None, year, b, a)
        if as_month_day and as_day_month and as_month_day != as_day_month:
            return _AMBIGUOUS
        return as_month_day or as_day_month
    m = _RE_MONTH_D_YEAR.match(s)
    if m:
        month = _MONTHS.get(m.group(1).lower())
        if month:
            return _try_date(None, int(m.group(3)), month, int(m.group(2)))
        return None
    m = _RE_D_MON_YEAR.match(s)
    if m:
        month = _MONTHS.get(m.group(2).lower())
        if month:
            return _try_date(None, int(m.group(3)), month, int(m.group(1)))
    return None


def standardize(table: Table) -> tuple[Table, FormatReport]:
    """Rewrite parseable dates to Date and "X%" strings to Percent.

    Ambiguous slash dates (both MM/DD and DD/MM valid, readings differ) are
    left as Text and their coordinates collected in the report.
    """
    report = FormatReport()
    rows = []
    for i, row in enumerate(table.rows):
        out = []
        for j, cell in enumerate(row):
            if not isinstance(cell, Text):
                out.append(cell)
                continue
            result = parse_date_flexible(cell.value)
            if result is _AMBIGUOUS:
                report.ambiguous_dates.append((i, j))
                out.append(cell)
                continue
            if result is not None:
                out.append(Date(result))
                report.standardized_cells += 1
                continue
            reparsed = parse_cell(cell.value)
            if isinstance(reparsed, Percent):
                out.append(reparsed)
                report.standardized_cells += 1
            else:
                out.append(cell)
        rows.append(out)
    return Table(table.caption, table.headers, rows), report


def _dominant_column_type(table: Table, col: int) -> str:
    dates = amounts = texts = 0
    for row in table.rows:
        cell = row[col]
        if isinstance(cell, Date):
            dates += 1
        elif isinstance(cell, (Number, Currency, Percent)):
            amounts += 1
        elif isinstance(cell, Text):
            texts += 1
    best = max(dates, amounts, texts)
    if best == 0:
        return "text"
    if dates == best:
        return "date"
    if amounts == best:
        return "amount"
    return "text"


def repair(table: Table) -> tuple[Table, FormatReport]:
    """Infer names for empty headers from the dominant column type and suffix
    duplicate headers with _2, _3, ... keeping the first occurrence intact."""
    report = FormatReport()
    taken: set[str] = set()
    new_headers: list[str] = []
    for j, header in enumerate(table.headers):
        name = header.strip()
        changed = False
        if not name:
            name = f"{_dominant_column_type(table, j)}_{j + 1}"
            changed = True
        if name in taken:
            k = 2
            while f"{name}_{k}" in taken:
                k += 1
            name = f"{name}_{k}"
            changed = True
        if changed:
            report.repaired_headers.append((j, name))
        taken.add(name)
        new_headers.append(name)
    return Table(table.caption, new_headers, table.rows), report


def _apply_rules(table: Table) -> tuple[Table, FormatReport]:
    cleaned, r1 = clean_cells(table)
    standardized, r2 = standardize(cleaned)
    repaired, r3 = repair(standardized)
    return repaired, r1.merge(r2).merge(r3)


def format_table(table: Table, query: str, mode: str = "rules", gateway=None) -> tuple[Table, FormatReport]:
    """Produce the formatted table.

    rules mode applies clean/standardize/repair; the query currently has no
    effect on the rule engine. llm mode asks the gateway for a formatted
    table and then validates it with the rule engine; any cell the rules
    would rewrite is rewritten. An LLM response that does not parse or does
    not preserve the table's shape is discarded in favor of the rule engine.
    """
    if mode == "rules":
        return _apply_rules(table)
    if mode != "llm":
        raise ValueError(f"unsupported formatter mode: {mode!r}")
    if gateway is None:
        raise ValueError("llm mode requires a gateway")
    from .gateway import build_formatter_prompt
    from .table import ParseError

    response = gateway.complete(build_formatter_prompt(table, query))
    try:
        candidate = parse_table(response.strip(), "json_rows")
    except ParseError:
        return _apply_rules(table)
    if candidate.n_rows != table.n_rows or candidate.n_cols != table.n_cols:
        return _apply_rules(table)
    candidate = Table(table.caption, candidate.headers, candidate.rows)
    return _apply_rules(candidate)
