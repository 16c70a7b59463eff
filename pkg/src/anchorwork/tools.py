"""Restricted interpreter for ``<code>`` blocks.

Only three functions exist: ``search_local_documents``, ``web_search`` and
``web_parse``. A block may bind names to string literals or tool results,
call a tool, and ``print`` names or literals. Every other statement is
answered with ``UNSUPPORTED`` and skipped; nothing is ever evaluated.
"""
from __future__ import annotations

import ast
import json
import re
import textwrap
from dataclasses import dataclass
from typing import Optional

from .retrieval import LexicalIndex, WebStub

TOOL_NAMES = ("search_local_documents", "web_search", "web_parse")
UNSUPPORTED = "unsupported statement: not executed"
DISABLED = "tool unavailable: retrieval is disabled in this mode"

CODE_BLOCK = re.compile(r"<code>(.*?)</code>", re.DOTALL)


@dataclass(frozen=True)
class ToolCall:
    function: str
    args: tuple[str, ...]
    result: str

    def __post_init__(self):
        if self.function not in TOOL_NAMES:
            raise ValueError(f"unknown tool {self.function!r}")

    def to_dict(self) -> dict:
        return {"function": self.function, "args": list(self.args), "result": self.result}


def find_code_blocks(text: str) -> list[str]:
    return CODE_BLOCK.findall(text)


class _Unsupported(Exception):
    pass


class _NameMissing(Exception):
    pass


class ToolBox:
    def __init__(
        self,
        index: Optional[LexicalIndex] = None,
        web: Optional[WebStub] = None,
        top_k: int = 3,
        enabled: bool = True,
    ):
        self.index = index
        self.web = web if web is not None else WebStub(index, top_k=top_k)
        self.top_k = top_k
        self.enabled = enabled

    def _invoke(self, name: str, args: list[str]) -> str:
        if name == "search_local_documents":
            (query,) = args[:1] or [""]
            if self.index is None or not query.strip():
                return "[]"
            ev = self.index.search_top_k(query, self.top_k)
            return json.dumps([s.to_dict() for s in ev.snippets], ensure_ascii=False)
        if name == "web_search":
            (keywords,) = args[:1] or [""]
            ev = self.web.web_search(keywords)
            return ev.render() if ev.snippets else "no results"
        link, query = (list(args) + ["", ""])[:2]
        return self.web.web_parse(link, query)

    def _value(self, node: ast.AST, env: dict) -> str:
        if isinstance(node, ast.Constant) and isinstance(node.value, (str, int, float)):
            return node.value if isinstance(node.value, str) else str(node.value)
        if isinstance(node, ast.Name):
            if node.id not in env:
                raise _NameMissing(f"NameError: name '{node.id}' is not defined")
            return env[node.id]
        raise _Unsupported

    def _tool_call(self, node: ast.AST, env: dict, calls: list[ToolCall]) -> Optional[str]:
        """Execute ``node`` if it is a tool call; None if it is not one."""
        if not (isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in TOOL_NAMES):
            return None
        args = [self._value(a, env) for a in node.args]
        kwargs = {kw.arg: self._value(kw.value, env) for kw in node.keywords if kw.arg}
        if len(kwargs) != len(node.keywords):
            raise _Unsupported
        order = {"search_local_documents": ("query",), "web_search": ("keywords",), "web_parse": ("link", "query")}
        for name in order[node.func.id][len(args):]:
            if name in kwargs:
                args.append(kwargs.pop(name))
        if kwargs:
            raise _Unsupported
        if not self.enabled:
            return DISABLED
        result = self._invoke(node.func.id, args)
        calls.append(ToolCall(node.func.id, tuple(args), result))
        return result

    def _statement(self, stmt: ast.stmt, env: dict, calls: list[ToolCall], out: list[str]) -> None:
        if isinstance(stmt, ast.Assign) and len(stmt.targets) == 1 and isinstance(stmt.targets[0], ast.Name):
            result = self._tool_call(stmt.value, env, calls)
            if result is None:
                if isinstance(stmt.value, ast.Constant) and not isinstance(stmt.value.value, str):
                    raise _Unsupported
                result = self._value(stmt.value, env)
            env[stmt.targets[0].id] = result
            return
        if isinstance(stmt, ast.Expr):
            node = stmt.value
            if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id == "print":
                if node.keywords:
                    raise _Unsupported
                parts = []
                for a in node.args:
                    result = self._tool_call(a, env, calls)
                    parts.append(self._value(a, env) if result is None else result)
                out.append(" ".join(parts))
                return
            if self._tool_call(node, env, calls) is not None:
                return
        raise _Unsupported

    def execute_tool_block(self, generated_text: str) -> tuple[list[ToolCall], str]:
        """Run every ``<code>`` block in ``generated_text``.

        Returns the tool calls made and the executor feedback (printed values
        and diagnostics, one per line). Text with no code block gives
        ``([], "")``.
        """
        calls: list[ToolCall] = []
        out: list[str] = []
        for block in find_code_blocks(generated_text):
            try:
                tree = ast.parse(textwrap.dedent(block).strip("\n"))
            except (SyntaxError, ValueError):  # ValueError: NUL bytes in source
                out.append(UNSUPPORTED)
                continue
            env: dict[str, str] = {}
            for stmt in tree.body:
                try:
                    self._statement(stmt, env, calls, out)
                except _Unsupported:
                    out.append(UNSUPPORTED)
                except _NameMissing as exc:
                    out.append(str(exc))
        return calls, "\n".join(out)


def execute_tool_block(generated_text: str, toolbox: Optional[ToolBox] = None) -> tuple[list[ToolCall], str]:
    return (toolbox or ToolBox()).execute_tool_block(generated_text)
