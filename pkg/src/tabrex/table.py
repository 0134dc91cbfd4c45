"""Typed tables: cell-value parsing, indexing, and the canonical array serialization.

Cells are parsed greedily into the most specific variant, with a fixed
precedence: Date > Currency > Percent > Number > Text. Every cell string
maps to exactly one variant; whitespace-only strings carry no data and
map to Missing.
"""

from __future__ import annotations

import csv
import datetime
import io
import json
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation


class ParseError(Exception):
    """Container syntax of the input text is invalid."""

    def __init__(self, format: str, line: int, message: str = ""):
        self.format = format
        self.line = line
        super().__init__(f"{format} parse error at line {line}" + (f": {message}" if message else ""))


class IndexOutOfBounds(Exception):
    def __init__(self, axis: str, index: int, size: int):
        self.axis = axis
        self.index = index
        self.size = size
        super().__init__(f"{axis} index {index} out of bounds for size {size}")


@dataclass(frozen=True)
class Number:
    value: Decimal


@dataclass(frozen=True)
class Text:
    value: str


@dataclass(frozen=True)
class Date:
    value: datetime.date


@dataclass(frozen=True)
class Currency:
    amount: Decimal
    symbol: str


@dataclass(frozen=True)
class Percent:
    # Displayed magnitude: "45%" stores 45, not 0.45.
    value: Decimal


@dataclass(frozen=True)
class Missing:
    pass


CellValue = Number | Text | Date | Currency | Percent | Missing

MISSING = Missing()

# Amounts may carry strict thousands separators (groups of three) or none.
_AMOUNT = r"(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|\.\d+"
_SYMBOLS = "$€£¥"

_RE_ISO_DATE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})$")
_RE_CURRENCY_PREFIX = re.compile(rf"^(-?)([{re.escape(_SYMBOLS)}])\s*({_AMOUNT})$")
_RE_CURRENCY_SUFFIX = re.compile(rf"^(-?)({_AMOUNT})\s*([{re.escape(_SYMBOLS)}])$")
_RE_CURRENCY_ISO = re.compile(rf"^(-?)({_AMOUNT})\s*([A-Z]{{3}})$")
_RE_PERCENT = re.compile(rf"^(-?(?:{_AMOUNT}))\s*%$")
_RE_NUMBER = re.compile(rf"^-?(?:{_AMOUNT})$")


def _decimal(text: str) -> Decimal:
    return Decimal(text.replace(",", ""))


def parse_cell(text: str) -> CellValue:
    """Parse one cell string into the most specific CellValue variant."""
    stripped = text.strip()
    if not stripped:
        return MISSING
    m = _RE_ISO_DATE.match(stripped)
    if m:
        try:
            return Date(datetime.date(int(m.group(1)), int(m.group(2)), int(m.group(3))))
        except ValueError:
            return Text(text)
    m = _RE_CURRENCY_PREFIX.match(stripped)
    if m:
        amount = _decimal(m.group(1) + m.group(3))
        return Currency(amount, m.group(2))
    m = _RE_CURRENCY_SUFFIX.match(stripped)
    if m:
        return Currency(_decimal(m.group(1) + m.group(2)), m.group(3))
    m = _RE_CURRENCY_ISO.match(stripped)
    if m:
        return Currency(_decimal(m.group(1) + m.group(2)), m.group(3))
    m = _RE_PERCENT.match(stripped)
    if m:
        return Percent(_decimal(m.group(1)))
    if _RE_NUMBER.match(stripped):
        return Number(_decimal(stripped))
    return Text(text)


def format_decimal(value: Decimal) -> str:
    """Render a Decimal with no exponent and no trailing zeros ("3.50" -> "3.5")."""
    if value == 0:
        return "0"
    return format(value.normalize(), "f")


@dataclass(frozen=True)
class Table:
    """Caption plus a rectangular grid of typed cells.

    Headers may be empty or duplicated until the formatter repairs them;
    rectangularity (every row as wide as the header row) always holds.
    """

    caption: str
    headers: tuple[str, ...]
    rows: tuple[tuple[CellValue, ...], ...]

    def __init__(self, caption: str, headers, rows):
        object.__setattr__(self, "caption", caption)
        object.__setattr__(self, "headers", tuple(headers))
        object.__setattr__(self, "rows", tuple(tuple(row) for row in rows))
        width = len(self.headers)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(f"row {i} has {len(row)} cells, expected {width}")

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_cols(self) -> int:
        return len(self.headers)


def cell_at(table: Table, row: int, col: int) -> CellValue:
    """Return the stored cell without coercion; 0-based indices."""
    if not 0 <= row < table.n_rows:
        raise IndexOutOfBounds("row", row, table.n_rows)
    if not 0 <= col < table.n_cols:
        raise IndexOutOfBounds("col", col, table.n_cols)
    return table.rows[row][col]


def _render_cell(cell: CellValue) -> str:
    if isinstance(cell, Number):
        return format_decimal(cell.value)
    if isinstance(cell, Date):
        return f'"{cell.value.isoformat()}"'
    if isinstance(cell, Currency):
        # Symbol dropped: the formatter has already recorded it.
        return format_decimal(cell.amount)
    if isinstance(cell, Percent):
        return format_decimal(cell.value)
    if isinstance(cell, Missing):
        return '""'
    return json.dumps(cell.value, ensure_ascii=False)


def serialize_canonical(table: Table) -> str:
    """Serialize to the nested-array literal consumed by prompts and the executor.

    First inner array holds the headers as quoted strings; each further
    array is one row. Deterministic: equal tables yield identical bytes.
    """
    arrays = ["[" + ", ".join(json.dumps(h, ensure_ascii=False) for h in table.headers) + "]"]
    for row in table.rows:
        arrays.append("[" + ", ".join(_render_cell(cell) for cell in row) + "]")
    return "[" + ", ".join(arrays) + "]"


def render_cell_text(cell: CellValue) -> str:
    """Bare text form of a cell (no quoting), used for matching and answers."""
    if isinstance(cell, Number):
        return format_decimal(cell.value)
    if isinstance(cell, Date):
        return cell.value.isoformat()
    if isinstance(cell, Currency):
        return format_decimal(cell.amount)
    if isinstance(cell, Percent):
        return format_decimal(cell.value)
    if isinstance(cell, Missing):
        return ""
    return cell.value


def _pad(rows: list[list[CellValue]], width: int) -> list[list[CellValue]]:
    return [row + [MISSING] * (width - len(row)) for row in rows]


def _from_string_grid(caption: str, grid: list[list[str]]) -> Table:
    headers = [h.strip() for h in grid[0]]
    rows = [[parse_cell(c) for c in row] for row in grid[1:]]
    width = max([len(headers)] + [len(r) for r in rows]) if rows else len(headers)
    headers = headers + [""] * (width - len(headers))
    return Table(caption, headers, _pad(rows, width))


def _parse_csv(text: str) -> Table:
    try:
        grid = [row for row in csv.reader(io.StringIO(text)) if row]
    except csv.Error as exc:
        raise ParseError("csv", 1, str(exc))
    if not grid:
        raise ParseError("csv", 1, "no rows")
    return _from_string_grid("", grid)


_RE_MD_SEPARATOR = re.compile(r"^\s*\|?\s*:?-+:?\s*(\|\s*:?-+:?\s*)*\|?\s*$")
_RE_MD_SPLIT = re.compile(r"(?<!\\)\|")


def _split_md_row(line: str) -> list[str]:
    parts = [p.strip().replace("\\|", "|") for p in _RE_MD_SPLIT.split(line)]
    if parts and parts[0] == "":
        parts = parts[1:]
    if parts and parts[-1] == "":
        parts = parts[:-1]
    return parts


def _parse_markdown(text: str) -> Table:
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    if len(lines) < 2:
        raise ParseError("markdown", 1, "missing header or separator row")
    header_no, header_line = lines[0]
    sep_no, sep_line = lines[1]
    if "|" not in header_line:
        raise ParseError("markdown", header_no, "header row has no cell delimiter")
    if not _RE_MD_SEPARATOR.match(sep_line):
        raise ParseError("markdown", sep_no, "expected separator row")
    headers = _split_md_row(header_line)
    rows = []
    for _, line in lines[2:]:
        cells = [parse_cell(c) for c in _split_md_row(line)]
        rows.append(cells[: len(headers)])
    return Table("", headers, _pad(rows, len(headers)))


def _json_header(value) -> str:
    if isinstance(value, str):
        return value.strip()
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    if isinstance(value, (int, float)):
        return format_decimal(Decimal(str(value)))
    return str(value)


def _json_cell(value) -> CellValue:
    if isinstance(value, str):
        return parse_cell(value)
    if isinstance(value, bool):
        return Text("true" if value else "false")
    if value is None:
        return MISSING
    if isinstance(value, (int, float)):
        return Number(Decimal(str(value)))
    raise TypeError(type(value).__name__)


def _parse_json_rows(text: str) -> Table:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError("json_rows", exc.lineno, exc.msg)
    if not isinstance(payload, list) or not payload or not all(isinstance(r, list) for r in payload):
        raise ParseError("json_rows", 1, "expected a non-empty array of arrays")
    headers = [_json_header(v) for v in payload[0]]
    rows = []
    for raw in payload[1:]:
        try:
            rows.append([_json_cell(v) for v in raw])
        except (TypeError, InvalidOperation):
            raise ParseError("json_rows", 1, "unsupported cell value")
    width = max([len(headers)] + [len(r) for r in rows]) if rows else len(headers)
    headers = headers + [""] * (width - len(headers))
    return Table("", headers, _pad(rows, width))


_PARSERS = {"csv": _parse_csv, "markdown": _parse_markdown, "json_rows": _parse_json_rows}


def parse_table(text: str, format: str) -> Table:
    """Parse text in the given format; ragged rows are padded with Missing.

    Raises ParseError when the container syntax is invalid, ValueError for
    an unsupported format name.
    """
    if format not in _PARSERS:
        raise ValueError(f"unsupported table format: {format!r}")
    if not text.strip():
        raise ParseError(format, 1, "empty input")
    return _PARSERS[format](text)
