"""Tool-usage analytics over execution traces: call frequencies, category
breakdowns, and overlap between the tool sets of two run collections."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from decimal import Decimal, ROUND_HALF_UP

from .tools import builtin_registry


def _trace_tools(outcome):
    """Tool names from one outcome's trace; accepts RunOutcome objects or
    their to_dict form, so stats can run over live results or trace files."""
    if isinstance(outcome, dict):
        return [entry["tool"] for entry in outcome["trace"]]
    return [entry[1] for entry in outcome.trace]


def _pct(part: int, whole: int) -> float:
    return float((100 * Decimal(part) / Decimal(whole))
                 .quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class ToolStats:
    frequencies: dict  # tool name -> call count
    categories: dict   # category -> call-weighted percentage
    total_calls: int

    def names(self) -> set:
        return set(self.frequencies)

    def top(self, k: int = 10) -> list:
        return sorted(self.frequencies.items(),
                      key=lambda item: (-item[1], item[0]))[:k]

    def to_dict(self, top_k: int = 10) -> dict:
        return {
            "categories": dict(sorted(self.categories.items())),
            "frequencies": dict(sorted(self.frequencies.items())),
            "top": [[name, count] for name, count in self.top(top_k)],
            "total_calls": self.total_calls,
        }


def tool_stats(outcomes: list, registry=None) -> ToolStats:
    registry = registry or builtin_registry()
    frequencies = Counter()
    for outcome in outcomes:
        frequencies.update(_trace_tools(outcome))
    by_category = Counter()
    for name, count in frequencies.items():
        spec = registry.lookup(name)
        by_category[spec.category if spec else "unknown"] += count
    total = sum(frequencies.values())
    categories = {cat: _pct(count, total) for cat, count in by_category.items()} \
        if total else {}
    return ToolStats(dict(frequencies), categories, total)


def overlap(a: ToolStats, b: ToolStats) -> dict:
    """Set overlap between two runs' tool inventories: Jaccard over the
    union, and the fraction of b's tools (the held-out side) already present
    in a. Empty sides count as fully overlapping."""
    a_names, b_names = a.names(), b.names()
    union = a_names | b_names
    shared = a_names & b_names
    return {
        "jaccard": len(shared) / len(union) if union else 1.0,
        "reuse": len(shared) / len(b_names) if b_names else 1.0,
    }
