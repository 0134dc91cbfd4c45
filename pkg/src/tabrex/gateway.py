"""Chat-completions gateway: prompt construction for the generative stages,
disk caching keyed on model plus prompt content, bounded retries, and parsing
of model replies back into programs and answers.

The endpoint speaks the common chat-completions wire shape. TABREX_BASE_URL
and TABREX_API_KEY override endpoint and credential at request time; the API
key never lives in config. TABREX_CACHE_DIR supplies the default cache
location. A warm cache answers without touching the network at all.
"""

from __future__ import annotations

import ast
import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import httpx

from .plan import _is_docstring
from .table import Table, parse_cell, serialize_canonical
from .tools import tooldef_from_source

DEFAULT_CHAR_BUDGET = 100_000

TOOLMAKER_TASK = (
    "Task Description: Given a table and a question, the task is to generate"
    " a python program to answer the question.\n"
    "Requirements:\n"
    "1. First define some functions to be used in the program.\n"
    "2. Try to reuse the functions defined in the previous problems if possible.\n"
    "3. When defining a new function, make sure this function is general enough"
    " to be used in other problems.\n"
    "4. Define a function called solution(table_data) that takes the table data"
    " as input and returns the answer to the question."
)

EXPLAINER_TASK = (
    "Task: Transform Python code used for a table question answering task into"
    " an easily understandable explanation in natural language embedded with"
    " function calls.\n"
    "Follow these requirements:\n"
    "1. The explanation should be the natural language combined with bracketed"
    " segments <<< >>> for code.\n"
    "2. The code segments in the brackets <<< >>> should indicate the line"
    " number of the code, with the format: ###<line number>.\n"
    "3. Multiple lines of codes are separated with ';;;' in the brackets <<< >>>."
)

FORMATTER_TASK = (
    "Task: Clean the given table. Remove footnote markers and thousands"
    " separators, rewrite dates as YYYY-MM-DD, convert percent and currency"
    " cells to bare numbers, and fill in any missing or duplicate column"
    " headers. Keep every row and column. Reply with the cleaned table as a"
    " nested array literal like the input, and nothing else."
)

COT_TASK = (
    "Answer the question using the given table. Think through the steps,"
    " then end your reply with a final line of the form 'Answer: <answer>'."
)

DIRECTQA_TASK = "Answer the question using the given table. Reply with the answer only."


class GatewayError(Exception):
    """kind is one of: transport, http_status, timeout, malformed_response."""

    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


class PromptTooLong(Exception):
    pass


class NoSolutionFound(Exception):
    pass


@dataclass(frozen=True)
class GatewayConfig:
    base_url: str = "http://localhost:8000/v1"
    model_name: str = "local-model"
    temperature: float = 0.0
    max_retries: int = 2
    cache_dir: str | None = None
    in_flight_limit: int = 4

    def __post_init__(self):
        if self.in_flight_limit < 1:
            raise ValueError("in_flight_limit must be at least 1")


@dataclass(frozen=True)
class PromptBundle:
    system: str
    fewshots: tuple
    user: str

    def char_count(self) -> int:
        return (len(self.system) + len(self.user)
                + sum(len(u) + len(a) for u, a in self.fewshots))

    def messages(self) -> list:
        messages = [{"role": "system", "content": self.system}]
        for shot_user, shot_assistant in self.fewshots:
            messages.append({"role": "user", "content": shot_user})
            messages.append({"role": "assistant", "content": shot_assistant})
        messages.append({"role": "user", "content": self.user})
        return messages


def bundle_key(bundle: PromptBundle, model_name: str) -> str:
    payload = json.dumps(
        {"fewshots": [[u, a] for u, a in bundle.fewshots],
         "system": bundle.system, "user": bundle.user},
        sort_keys=True, ensure_ascii=False)
    return hashlib.sha256((model_name + payload).encode("utf-8")).hexdigest()


def _cache_root(config: GatewayConfig) -> Path:
    return Path(config.cache_dir
                or os.environ.get("TABREX_CACHE_DIR")
                or ".tabrex_cache")


def cache_file(config: GatewayConfig, bundle: PromptBundle) -> Path:
    return _cache_root(config) / f"{bundle_key(bundle, config.model_name)}.json"


def store_completion(config: GatewayConfig, bundle: PromptBundle, content: str) -> Path:
    """Seed the cache so a later complete() hits without network."""
    path = cache_file(config, bundle)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps({"content": content}, ensure_ascii=False), encoding="utf-8")
    tmp.replace(path)
    return path


def _read_cached(config: GatewayConfig, bundle: PromptBundle):
    path = cache_file(config, bundle)
    if path.exists():
        return json.loads(path.read_text(encoding="utf-8"))["content"]
    return None


class Gateway:
    def __init__(self, config: GatewayConfig, transport=None, sleep=time.sleep):
        self.config = config
        self._semaphore = threading.Semaphore(config.in_flight_limit)
        self._client = httpx.Client(transport=transport, timeout=30.0)
        self._sleep = sleep

    def close(self):
        self._client.close()

    def complete(self, bundle: PromptBundle) -> str:
        cached = _read_cached(self.config, bundle)
        if cached is not None:
            return cached
        content = self._request(bundle)
        store_completion(self.config, bundle, content)
        return content

    def _request(self, bundle: PromptBundle) -> str:
        base_url = os.environ.get("TABREX_BASE_URL") or self.config.base_url
        url = base_url.rstrip("/") + "/chat/completions"
        headers = {}
        api_key = os.environ.get("TABREX_API_KEY")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "messages": bundle.messages(),
        }
        last_error = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self._sleep(0.5 * (2 ** (attempt - 1)))
            try:
                with self._semaphore:
                    response = self._client.post(url, json=payload, headers=headers)
            except httpx.TimeoutException as exc:
                last_error = GatewayError("timeout", str(exc) or "timed out")
                continue
            except httpx.TransportError as exc:
                last_error = GatewayError("transport", str(exc) or "transport failure")
                continue
            if response.status_code >= 500:
                last_error = GatewayError(
                    "http_status", f"server returned {response.status_code}")
                continue
            if response.status_code != 200:
                raise GatewayError(
                    "http_status", f"server returned {response.status_code}")
            try:
                content = response.json()["choices"][0]["message"]["content"]
            except (json.JSONDecodeError, KeyError, IndexError, TypeError):
                raise GatewayError("malformed_response", "no completion content")
            if not isinstance(content, str):
                raise GatewayError("malformed_response", "completion content is not text")
            return content
        raise last_error


class CacheOnlyGateway:
    """Serves completions from the cache and never opens a connection."""

    def __init__(self, config: GatewayConfig):
        self.config = config

    def complete(self, bundle: PromptBundle) -> str:
        cached = _read_cached(self.config, bundle)
        if cached is None:
            raise GatewayError("transport", "no cached completion for this prompt")
        return cached


@lru_cache(maxsize=None)
def _fewshot_entries(module: str) -> tuple:
    path = resources.files("tabrex").joinpath(f"data/fewshots/{module}.json")
    return tuple(json.loads(path.read_text(encoding="utf-8")))


def _fewshot_table(entry: dict) -> Table:
    grid = entry["grid"]
    rows = [[parse_cell(cell) for cell in row] for row in grid[1:]]
    return Table(entry["caption"], grid[0], rows)


def _table_text(table: Table) -> str:
    return f"{table.caption} {serialize_canonical(table)}".strip()


def _require_query(query: str):
    if not query.strip():
        raise ValueError("query must be non-empty")


def _check_budget(bundle: PromptBundle, limit_chars: int) -> PromptBundle:
    if bundle.char_count() > limit_chars:
        raise PromptTooLong(
            f"prompt needs {bundle.char_count()} chars, budget is {limit_chars}")
    return bundle


def _example_header(table: Table, query: str, answer: str | None = None) -> str:
    lines = ["------", "'''", f"Table: {_table_text(table)}", f"Question: {query}"]
    if answer is not None:
        lines.append(f"Answer: {answer}")
    lines.append("'''")
    return "\n".join(lines)


def _formatter_user(table: Table, query: str) -> str:
    return (f"Table: {serialize_canonical(table)}\n"
            f"Caption: {table.caption}\n"
            f"Question: {query}\n"
            "Cleaned table:")


def build_formatter_prompt(table: Table, query: str,
                           limit_chars: int = DEFAULT_CHAR_BUDGET) -> PromptBundle:
    fewshots = tuple(
        (_formatter_user(_fewshot_table(e), e["question"]), e["completion"])
        for e in _fewshot_entries("formatter"))
    return _check_budget(
        PromptBundle(FORMATTER_TASK, fewshots, _formatter_user(table, query)),
        limit_chars)


def _toolmaker_user(table: Table, query: str, answer: str | None) -> str:
    return (_example_header(table, query, answer)
            + f"\n\ntable_data = {serialize_canonical(table)}")


def build_toolmaker_prompt(table: Table, query: str, answer: str | None = None,
                           limit_chars: int = DEFAULT_CHAR_BUDGET) -> PromptBundle:
    """The program-writing prompt. Pass answer only when the caller knows the
    gold answer and wants the program to hit it (training data synthesis)."""
    _require_query(query)
    fewshots = tuple(
        (_toolmaker_user(_fewshot_table(e), e["question"], e["answer"]), e["completion"])
        for e in _fewshot_entries("toolmaker"))
    return _check_budget(
        PromptBundle(TOOLMAKER_TASK, fewshots, _toolmaker_user(table, query, answer)),
        limit_chars)


def _numbered_solution(program_text: str) -> str:
    tree = ast.parse(program_text)
    functions = [node for node in tree.body
                 if isinstance(node, ast.FunctionDef) and node.name == "solution"]
    if not functions:
        raise NoSolutionFound("no solution function to explain")
    fn = functions[-1]
    lines = [program_text.splitlines()[fn.lineno - 1]]
    body = fn.body
    if body and _is_docstring(body[0]):
        body = body[1:]
    step = 0
    for stmt in body:
        segment = ast.get_source_segment(program_text, stmt)
        if isinstance(stmt, ast.Return):
            lines.append(f"    {segment}")
        else:
            step += 1
            lines.append(f"    {segment} ###{step}")
    return "\n".join(lines)


def _explainer_user(table: Table, query: str, answer: str, program: str) -> str:
    return (_example_header(table, query, answer)
            + "\nPython Code:\n"
            + f"table_data = {serialize_canonical(table)}\n\n"
            + _numbered_solution(program)
            + "\n\nprint(solution(table_data))\n\nOutput Explanation:")


def build_explainer_prompt(program: str, record,
                           limit_chars: int = DEFAULT_CHAR_BUDGET) -> PromptBundle:
    """record supplies .table, .query and .gold; program is the python source
    whose solution body the explanation will reference by step number."""
    _require_query(record.query)
    fewshots = tuple(
        (_explainer_user(_fewshot_table(e), e["question"], e["answer"], e["program"]),
         e["completion"])
        for e in _fewshot_entries("explainer"))
    return _check_budget(
        PromptBundle(
            EXPLAINER_TASK, fewshots,
            _explainer_user(record.table, record.query, record.gold, program)),
        limit_chars)


def _qa_user(table: Table, query: str) -> str:
    return f"Table: {_table_text(table)}\nQuestion: {query}"


def build_cot_prompt(table: Table, query: str,
                     limit_chars: int = DEFAULT_CHAR_BUDGET) -> PromptBundle:
    _require_query(query)
    fewshots = tuple(
        (_qa_user(_fewshot_table(e), e["question"]), e["completion"])
        for e in _fewshot_entries("cot"))
    return _check_budget(
        PromptBundle(COT_TASK, fewshots, _qa_user(table, query)), limit_chars)


def build_directqa_prompt(table: Table, query: str,
                          limit_chars: int = DEFAULT_CHAR_BUDGET) -> PromptBundle:
    _require_query(query)
    fewshots = tuple(
        (_qa_user(_fewshot_table(e), e["question"]), e["completion"])
        for e in _fewshot_entries("directqa"))
    return _check_budget(
        PromptBundle(DIRECTQA_TASK, fewshots, _qa_user(table, query)), limit_chars)


_FENCE = re.compile(r"```[a-zA-Z]*\n(.*?)```", re.DOTALL)
_ANSWER_LINE = re.compile(r"(?i)answer\s*[:=]\s*(.+)")


def _candidate_sources(text: str):
    fenced = _FENCE.findall(text)
    if fenced:
        yield "\n\n".join(block.strip("\n") for block in fenced)
    yield text
    lines = text.splitlines()
    for i, line in enumerate(lines):
        if line.startswith("def "):
            yield "\n".join(lines[i:])
            break


def parse_toolmaker_output(text: str):
    """Split a program-writing reply into (helper ToolDefs, solution source).

    Tolerates markdown fences and leading prose. Raises NoSolutionFound when
    no parseable solution(...) function can be recovered.
    """
    tree = None
    code = None
    for candidate in _candidate_sources(text):
        try:
            tree = ast.parse(candidate)
            code = candidate
            break
        except SyntaxError:
            continue
    if tree is None:
        raise NoSolutionFound("reply is not python")
    functions = [node for node in tree.body if isinstance(node, ast.FunctionDef)]
    solution = next(
        (fn for fn in reversed(functions) if fn.name == "solution"), None)
    if solution is None:
        raise NoSolutionFound("reply defines no solution function")
    tools = [tooldef_from_source(ast.get_source_segment(code, fn) or ast.unparse(fn))
             for fn in functions if fn.name != "solution"]
    return tools, ast.get_source_segment(code, solution) or ast.unparse(solution)


def extract_final_answer(text: str) -> str:
    """Answer text from a free-form reply: the last 'Answer: ...' line wins,
    otherwise the last non-empty line."""
    matches = _ANSWER_LINE.findall(text)
    if matches:
        return matches[-1].strip()
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    return lines[-1] if lines else ""
