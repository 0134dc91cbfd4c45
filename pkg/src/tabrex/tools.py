"""Builtin tool registry, generated-tool fingerprinting, dedup, and abstraction.

Generated tool bodies are never executed. A generated definition either maps
onto a builtin (by name, alias, or structural body fingerprint) or is
rejected, which makes plans that call it non-executable. Fingerprints hash
the function body after α-renaming every bound identifier, so lexical
variable choices don't defeat deduplication.
"""

from __future__ import annotations

import ast
import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass

CATEGORIES = ("table_preprocess", "numerical", "logical", "higher_level")

KINDS = ("table", "column", "row", "number", "string", "bool", "list_number", "any")


class UnknownTool(Exception):
    def __init__(self, name: str):
        super().__init__(f"unknown tool: {name}")
        self.name = name


@dataclass(frozen=True)
class ToolSpec:
    name: str
    params: tuple  # of (name, kind)
    returns: str
    category: str
    aliases: tuple = ()


@dataclass(frozen=True)
class ToolDef:
    name: str
    source_text: str
    param_count: int
    body_fingerprint: str


@dataclass(frozen=True)
class MappedTo:
    name: str


@dataclass(frozen=True)
class Rejected:
    reason: str


def snake_case(name: str) -> str:
    name = name.strip()
    name = re.sub(r"(?<=[a-z0-9])([A-Z])", r"_\1", name)
    name = re.sub(r"(?<=[A-Z])([A-Z][a-z])", r"_\1", name)
    return name.lower()


class Registry:
    """Immutable name/alias index over ToolSpecs, plus reference fingerprints
    for mapping generated definitions onto builtins."""

    def __init__(self, specs: list, reference_sources: dict | None = None):
        self.specs = tuple(specs)
        self.alias_index: dict = {}
        for spec in specs:
            for name in (spec.name, *spec.aliases):
                if name in self.alias_index:
                    raise ValueError(f"duplicate tool name or alias: {name}")
                self.alias_index[name] = spec.name
        self._by_name = {spec.name: spec for spec in specs}
        self._fingerprints: dict = {}
        for name, source in (reference_sources or {}).items():
            self._fingerprints[tooldef_from_source(source).body_fingerprint] = name

    def lookup(self, name: str):
        canonical = self.alias_index.get(snake_case(name))
        return self._by_name.get(canonical) if canonical else None

    def resolve(self, name: str) -> ToolSpec:
        spec = self.lookup(name)
        if spec is None:
            raise UnknownTool(name)
        return spec

    def lookup_fingerprint(self, fingerprint: str):
        return self._fingerprints.get(fingerprint)

    def to_config_dict(self) -> dict:
        return {
            "tools": [
                {
                    "name": spec.name,
                    "params": [[p, k] for p, k in spec.params],
                    "returns": spec.returns,
                    "category": spec.category,
                    "aliases": list(spec.aliases),
                }
                for spec in sorted(self.specs, key=lambda s: s.name)
            ]
        }

    def content_hash(self) -> str:
        payload = json.dumps(self.to_config_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def resolve(name: str, registry: Registry) -> ToolSpec:
    return registry.resolve(name)


def _collect_bindings(fn: ast.FunctionDef) -> list:
    bound = []
    seen = set()

    def bind(name: str):
        if name not in seen:
            seen.add(name)
            bound.append(name)

    for node in ast.walk(fn):
        if isinstance(node, ast.arg):
            bind(node.arg)
        elif isinstance(node, ast.Name) and isinstance(node.ctx, (ast.Store, ast.Del)):
            bind(node.id)
    return bound


class _Renamer(ast.NodeTransformer):
    def __init__(self, mapping: dict):
        self.mapping = mapping

    def visit_Name(self, node: ast.Name):
        if node.id in self.mapping:
            return ast.copy_location(ast.Name(id=self.mapping[node.id], ctx=node.ctx), node)
        return node

    def visit_arg(self, node: ast.arg):
        if node.arg in self.mapping:
            node = ast.arg(arg=self.mapping[node.arg], annotation=node.annotation)
        return node


def _body_fingerprint(fn: ast.FunctionDef) -> str:
    mapping = {name: f"x{i}" for i, name in enumerate(_collect_bindings(fn))}
    renamed = _Renamer(mapping).visit(ast.parse(ast.unparse(fn)).body[0])
    dump = "\n".join(ast.dump(stmt) for stmt in renamed.body)
    return hashlib.sha256(dump.encode("utf-8")).hexdigest()


def tooldef_from_source(source_text: str) -> ToolDef:
    """Build a ToolDef from one function definition's source."""
    tree = ast.parse(source_text)
    fn = next((n for n in tree.body if isinstance(n, ast.FunctionDef)), None)
    if fn is None:
        raise ValueError("source contains no function definition")
    param_count = len(fn.args.posonlyargs) + len(fn.args.args)
    return ToolDef(fn.name, source_text, param_count, _body_fingerprint(fn))


def abstract_tools(defs: list, min_count: int = 2) -> list:
    """Drop definitions whose (snake-cased) name occurs fewer than min_count
    times across the corpus. min_count=1 keeps everything."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter(snake_case(d.name) for d in defs)
    return [d for d in defs if counts[snake_case(d.name)] >= min_count]


def deduplicate(defs: list) -> tuple:
    """Merge structurally equivalent definitions.

    Each name is first pinned to its most frequent body (ties broken by
    fingerprint); names sharing a body merge into one def whose canonical
    name is the lexicographically smallest. Returns (canonical defs sorted by
    name, alias_map of merged name → canonical name).
    """
    if not defs:
        return [], {}
    triple_counts = Counter((d.name, d.param_count, d.body_fingerprint) for d in defs)
    name_body_counts: dict = {}
    for (name, params, fp), n in triple_counts.items():
        name_body_counts.setdefault(name, Counter())[(params, fp)] += n
    body_of = {
        name: min(bodies.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        for name, bodies in name_body_counts.items()
    }
    groups: dict = {}
    for name, body in body_of.items():
        groups.setdefault(body, []).append(name)
    canonical_defs = []
    alias_map: dict = {}
    for body, names in groups.items():
        names.sort()
        canonical = names[0]
        for other in names[1:]:
            alias_map[other] = canonical
        # min over source_text keeps the result independent of input order
        representative = min(
            (d for d in defs
             if d.name == canonical and (d.param_count, d.body_fingerprint) == body),
            key=lambda d: d.source_text)
        canonical_defs.append(ToolDef(
            canonical, representative.source_text, body[0], body[1]))
    canonical_defs.sort(key=lambda d: d.name)
    return canonical_defs, alias_map


def consolidate(defs: list, min_count: int = 2) -> tuple:
    """Dedup then apply the occurrence filter on pooled (post-alias) counts.
    Returns (kept canonical defs, alias_map)."""
    canonical_defs, alias_map = deduplicate(defs)
    freq = Counter(alias_map.get(d.name, d.name) for d in defs)
    kept = [d for d in canonical_defs if freq[d.name] >= min_count]
    return kept, alias_map


def register_generated(tool_def: ToolDef, registry: Registry):
    """Map a generated definition onto a builtin, or reject it. The registry
    is never mutated and the definition's code is never executed."""
    spec = registry.lookup(tool_def.name)
    if spec is not None:
        return MappedTo(spec.name)
    match = registry.lookup_fingerprint(tool_def.body_fingerprint)
    if match is not None and len(registry.resolve(match).params) == tool_def.param_count:
        return MappedTo(match)
    return Rejected("no builtin match")


_NUM2 = (("a", "number"), ("b", "number"))
_LIST1 = (("values", "list_number"),)
_ANY2 = (("a", "any"), ("b", "any"))

_SPECS = [
    ToolSpec("get_column_by_name", (("table", "table"), ("name", "string")), "column", "table_preprocess"),
    ToolSpec("get_column_by_index", (("table", "table"), ("index", "number")), "column", "table_preprocess"),
    ToolSpec("get_row_by_name", (("table", "table"), ("name", "string")), "row", "table_preprocess"),
    ToolSpec("get_row_index_by_value", (("column", "column"), ("value", "any")), "number", "table_preprocess"),
    ToolSpec("get_column_cell_value", (("column", "column"), ("index", "number")), "any", "table_preprocess", ("get_cell",)),
    ToolSpec("extract_price", (("text", "string"),), "number", "table_preprocess"),
    ToolSpec("add", _NUM2, "number", "numerical"),
    ToolSpec("subtract", _NUM2, "number", "numerical"),
    ToolSpec("multiply", _NUM2, "number", "numerical"),
    ToolSpec("divide", _NUM2, "number", "numerical"),
    ToolSpec("sum", _LIST1, "number", "numerical", ("total",)),
    ToolSpec("average", _LIST1, "number", "numerical", ("mean",)),
    ToolSpec("min", _LIST1, "number", "numerical"),
    ToolSpec("max", _LIST1, "number", "numerical"),
    ToolSpec("count", _LIST1, "number", "numerical"),
    ToolSpec("argmax", (("column", "column"),), "number", "numerical"),
    ToolSpec("argmin", (("column", "column"),), "number", "numerical"),
    ToolSpec("equal_to", _ANY2, "bool", "logical"),
    ToolSpec("greater_than", _ANY2, "bool", "logical"),
    ToolSpec("less_than", _ANY2, "bool", "logical"),
    ToolSpec("filter_rows", (("table", "table"), ("column", "string"), ("value", "any")), "table", "higher_level"),
    ToolSpec("linear_regression", (("xs", "list_number"), ("ys", "list_number")), "list_number", "higher_level"),
]

# Reference implementations used only for fingerprint matching; never run.
_REFERENCE_SOURCES = {
    "get_column_by_name": (
        "def get_column_by_name(table, name):\n"
        "    index = table[0].index(name)\n"
        "    return [row[index] for row in table[1:]]\n"
    ),
    "get_column_by_index": (
        "def get_column_by_index(table, index):\n"
        "    return [row[index] for row in table[1:]]\n"
    ),
    "get_row_by_name": (
        "def get_row_by_name(table, name):\n"
        "    for row in table[1:]:\n"
        "        if row[0] == name:\n"
        "            return row\n"
        "    return None\n"
    ),
    "get_row_index_by_value": (
        "def get_row_index_by_value(column, value):\n"
        "    for index, item in enumerate(column):\n"
        "        if item == value:\n"
        "            return index\n"
        "    return None\n"
    ),
    "get_column_cell_value": (
        "def get_column_cell_value(column, index):\n"
        "    return column[index]\n"
    ),
    "extract_price": (
        "def extract_price(text):\n"
        "    cleaned = \"\".join(ch for ch in text if ch.isdigit() or ch == \".\")\n"
        "    return float(cleaned)\n"
    ),
    "add": "def add(a, b):\n    return a + b\n",
    "subtract": "def subtract(a, b):\n    return a - b\n",
    "multiply": "def multiply(a, b):\n    return a * b\n",
    "divide": "def divide(a, b):\n    return a / b\n",
    "sum": (
        "def sum(values):\n"
        "    total = 0\n"
        "    for value in values:\n"
        "        total = total + value\n"
        "    return total\n"
    ),
    "average": (
        "def average(values):\n"
        "    total = 0\n"
        "    for value in values:\n"
        "        total = total + value\n"
        "    return total / len(values)\n"
    ),
    "min": (
        "def min(values):\n"
        "    best = values[0]\n"
        "    for value in values:\n"
        "        if value < best:\n"
        "            best = value\n"
        "    return best\n"
    ),
    "max": (
        "def max(values):\n"
        "    best = values[0]\n"
        "    for value in values:\n"
        "        if value > best:\n"
        "            best = value\n"
        "    return best\n"
    ),
    "count": "def count(values):\n    return len(values)\n",
    "argmax": (
        "def argmax(column):\n"
        "    best = 0\n"
        "    for index, value in enumerate(column):\n"
        "        if value > column[best]:\n"
        "            best = index\n"
        "    return best\n"
    ),
    "argmin": (
        "def argmin(column):\n"
        "    best = 0\n"
        "    for index, value in enumerate(column):\n"
        "        if value < column[best]:\n"
        "            best = index\n"
        "    return best\n"
    ),
    "equal_to": "def equal_to(a, b):\n    return a == b\n",
    "greater_than": "def greater_than(a, b):\n    return a > b\n",
    "less_than": "def less_than(a, b):\n    return a < b\n",
    "filter_rows": (
        "def filter_rows(table, column, value):\n"
        "    index = table[0].index(column)\n"
        "    rows = [row for row in table[1:] if row[index] == value]\n"
        "    return [table[0]] + rows\n"
    ),
    "linear_regression": (
        "def linear_regression(xs, ys):\n"
        "    n = len(xs)\n"
        "    mean_x = sum(xs) / n\n"
        "    mean_y = sum(ys) / n\n"
        "    cov = 0\n"
        "    var = 0\n"
        "    for i in range(n):\n"
        "        cov = cov + (xs[i] - mean_x) * (ys[i] - mean_y)\n"
        "        var = var + (xs[i] - mean_x) * (xs[i] - mean_x)\n"
        "    slope = cov / var\n"
        "    intercept = mean_y - slope * mean_x\n"
        "    return [slope, intercept]\n"
    ),
}

_BUILTIN = None


def builtin_registry() -> Registry:
    global _BUILTIN
    if _BUILTIN is None:
        _BUILTIN = Registry(_SPECS, _REFERENCE_SOURCES)
    return _BUILTIN
