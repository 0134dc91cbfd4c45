"""Explanations: prose interleaved with bracketed references to plan steps.

Wire form: free text with segments like <<<###1 ;;; ###3>>>, each ###k naming
the 1-based plan step it explains. Steps inside one bracket pair must
strictly increase; ordering across the whole document is a validation
concern, not a parse error, so a generator's output can be inspected rather
than thrown away.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .plan import Diagnostic, Plan, render_arg


@dataclass(frozen=True)
class TextSeg:
    text: str


@dataclass(frozen=True)
class CallRef:
    steps: tuple


class MalformedRef(Exception):
    """Unparseable reference. position is the offset of the <<< that opened it."""

    def __init__(self, position: int, message: str):
        super().__init__(f"at {position}: {message}")
        self.position = position


class TraceMissing(Exception):
    pass


_REF_TOKEN = re.compile(r"^\s*###(\d+)\s*$")


def parse_explanation(text: str) -> list:
    segments: list = []

    def add_text(piece: str):
        if not piece:
            return
        if segments and isinstance(segments[-1], TextSeg):
            segments[-1] = TextSeg(segments[-1].text + piece)
        else:
            segments.append(TextSeg(piece))

    pos = 0
    while True:
        start = text.find("<<<", pos)
        if start == -1:
            add_text(text[pos:])
            return segments
        add_text(text[pos:start])
        end = text.find(">>>", start + 3)
        if end == -1:
            raise MalformedRef(start, "unclosed reference")
        steps = []
        for token in text[start + 3:end].split(";;;"):
            matched = _REF_TOKEN.match(token)
            if not matched:
                raise MalformedRef(start, f"bad reference token {token.strip()!r}")
            steps.append(int(matched.group(1)))
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise MalformedRef(start, "steps inside one reference must increase")
        segments.append(CallRef(tuple(steps)))
        pos = end + 3


def serialize_explanation(segments: list) -> str:
    parts = []
    for seg in segments:
        if isinstance(seg, TextSeg):
            parts.append(seg.text)
        else:
            parts.append("<<<" + " ;;; ".join(f"###{k}" for k in seg.steps) + ">>>")
    return "".join(parts)


def validate_refs(segments: list, n_steps: int) -> list:
    """OutOfRange and NonIncreasing are errors; an unreferenced step is only
    a warning since prose may legitimately gloss over bookkeeping steps."""
    diags = []
    flat = [k for seg in segments if isinstance(seg, CallRef) for k in seg.steps]
    for k in flat:
        if not 1 <= k <= n_steps:
            diags.append(Diagnostic(
                "error", "OutOfRange", k, f"###{k} outside 1..{n_steps}"))
    for prev, k in zip(flat, flat[1:]):
        if k <= prev:
            diags.append(Diagnostic(
                "error", "NonIncreasing", k, f"###{k} follows ###{prev}"))
    referenced = set(flat)
    for k in range(1, n_steps + 1):
        if k not in referenced:
            diags.append(Diagnostic(
                "warning", "Uncovered", k, f"step {k} never referenced"))
    return diags


def render(segments: list, plan: Plan, outcome=None, mode: str = "symbolic") -> str:
    """Expand references into readable step descriptions.

    symbolic shows each call as written in the plan; results additionally
    appends the runtime value of each referenced step, which requires an
    executable outcome. When an outcome is given its answer goes on a final
    line either way.
    """
    if mode not in ("symbolic", "results"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "results" and (outcome is None or not outcome.executable):
        raise TraceMissing("results rendering needs an executable outcome")
    steps_by_index = {step.index: step for step in plan.steps}
    results = {entry[0]: entry[3] for entry in outcome.trace} if outcome else {}
    parts = []
    for seg in segments:
        if isinstance(seg, TextSeg):
            parts.append(seg.text)
            continue
        bits = []
        for k in seg.steps:
            step = steps_by_index.get(k)
            if step is None:
                raise ValueError(f"reference to unknown step {k}")
            args = ", ".join(render_arg(a) for a in step.args)
            call = f"step {k}: {step.tool}({args})"
            if mode == "results":
                call = f"{call} = {results[k]}"
            bits.append(call)
        parts.append("[" + "; ".join(bits) + "]")
    text = "".join(parts)
    if outcome is not None:
        text = f"{text}\nAnswer: {outcome.answer}"
    return text
