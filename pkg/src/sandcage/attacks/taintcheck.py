"""``sandcage-taintcheck``: the static half of the tainted-data discipline.

Two passes over the same build:

* ``mypy --strict``.  The wrapper types are shaped so that most breaches
  are ordinary type errors (passing host objects where guest references are
  expected, indexing or ranging with a tainted value, registering a callback
  whose parameters are not tainted, reading a freezable field directly).
* a taint pass over mypy's typed tree that rejects a ``Tainted`` value used
  as a condition (``if``, ``while``, ``assert``, ternaries, ``and``/``or``,
  ``not``, comprehension filters, ``bool(...)``).  Python cannot make that
  a type error because every object is truthy.

Exit status is 1 when any file has an error, 0 otherwise.
"""

from __future__ import annotations

import argparse
import os
import re
import sys
from dataclasses import dataclass
from typing import Iterable, Sequence

from mypy import build
from mypy.main import process_options
from mypy.nodes import (
    AssertStmt,
    CallExpr,
    ConditionalExpr,
    DictionaryComprehension,
    Expression,
    GeneratorExpr,
    IfStmt,
    ListComprehension,
    MypyFile,
    NameExpr,
    Node,
    OpExpr,
    SetComprehension,
    UnaryExpr,
    WhileStmt,
)
from mypy.types import Instance, Type, get_proper_type

TAINTED = "sandcage.taint.Tainted"
TAINT_CODE = "tainted-condition"
_PKG_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
_MSG = re.compile(r"^(?P<path>.+?):(?P<line>\d+):(?:(?P<col>\d+):)? (?P<sev>error|note): (?P<text>.*)$")


@dataclass(frozen=True)
class Diagnostic:
    path: str
    line: int
    column: int
    severity: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}:{self.line}:{self.column}: {self.severity}: {self.message}"


# child attributes of mypy statement and expression nodes that can hold code
_CHILDREN = (
    "defs", "body", "else_body", "finally_body", "handlers", "items", "func", "expr", "exprs",
    "lvalues", "rvalue", "target", "index", "base", "value", "key", "left", "right", "operands",
    "callee", "args", "cond", "if_expr", "else_expr", "generator", "left_expr", "sequences",
    "condlists", "indices", "begin_index", "end_index", "stride", "subject", "guards", "bodies",
)


class _ConditionPass:
    """Walks one module's mypy tree and flags tainted conditions."""

    def __init__(self, path: str, types: dict[Expression, Type]) -> None:
        self.path = path
        self.types = types
        self.found: list[Diagnostic] = []
        self._seen: set[int] = set()

    def _flag(self, expr: Expression | None, what: str) -> None:
        if expr is None:
            return
        t = self.types.get(expr)
        if t is None:
            return
        p = get_proper_type(t)
        if isinstance(p, Instance) and p.type.fullname == TAINTED:
            msg = f"tainted value used as {what}; verify it first  [{TAINT_CODE}]"
            self.found.append(Diagnostic(self.path, expr.line, expr.column + 1, "error", msg))

    def _inspect(self, node: object) -> None:
        if isinstance(node, IfStmt):
            for e in node.expr:
                self._flag(e, "an if condition")
        elif isinstance(node, WhileStmt):
            self._flag(node.expr, "a while condition")
        elif isinstance(node, AssertStmt):
            self._flag(node.expr, "an assert condition")
        elif isinstance(node, ConditionalExpr):
            self._flag(node.cond, "a conditional-expression test")
        elif isinstance(node, OpExpr) and node.op in ("and", "or"):
            self._flag(node.left, f"an operand of '{node.op}'")
            self._flag(node.right, f"an operand of '{node.op}'")
        elif isinstance(node, UnaryExpr) and node.op == "not":
            self._flag(node.expr, "the operand of 'not'")
        elif isinstance(node, (GeneratorExpr, ListComprehension, SetComprehension, DictionaryComprehension)):
            gen = node if isinstance(node, (GeneratorExpr, DictionaryComprehension)) else node.generator
            for conds in gen.condlists:
                for c in conds:
                    self._flag(c, "a comprehension filter")
        elif isinstance(node, CallExpr) and isinstance(node.callee, NameExpr) and node.callee.fullname == "builtins.bool":
            for a in node.args:
                self._flag(a, "the argument of bool()")

    def walk(self, node: object) -> None:
        if isinstance(node, (list, tuple)):
            for item in node:
                self.walk(item)
            return
        if not isinstance(node, Node) or id(node) in self._seen:
            return
        self._seen.add(id(node))
        self._inspect(node)
        for attr in _CHILDREN:
            child = getattr(node, attr, None)
            if child is not None and not isinstance(child, (str, int)):
                self.walk(child)


def check(paths: Sequence[str], extra_args: Iterable[str] = ()) -> dict[str, list[Diagnostic]]:
    """Type-check ``paths`` in one build; return the errors per file (absolute path keys)."""
    files = [os.path.abspath(p) for p in paths]
    sources, options = process_options(["--strict", "--show-column-numbers", "--no-error-summary", *extra_args, *files])
    options.export_types = True
    options.preserve_asts = True
    options.incremental = False
    options.mypy_path = [_PKG_ROOT, *options.mypy_path]
    result = build.build(sources, options)
    out: dict[str, list[Diagnostic]] = {f: [] for f in files}
    for line in result.errors:
        m = _MSG.match(line)
        if not m or m["sev"] != "error":
            continue
        path = os.path.abspath(m["path"])
        if path in out:
            out[path].append(Diagnostic(path, int(m["line"]), int(m["col"] or 0), "error", m["text"]))
    for src in sources:
        state = result.graph.get(src.module)
        tree = state.tree if state else None
        if not isinstance(tree, MypyFile) or src.path is None:
            continue
        path = os.path.abspath(src.path)
        walker = _ConditionPass(path, result.types)
        walker.walk(tree.defs)
        out.setdefault(path, []).extend(walker.found)
    for diags in out.values():
        diags.sort(key=lambda d: (d.line, d.column))
    return out


def main(argv: Sequence[str] | None = None) -> int:
    p = argparse.ArgumentParser(prog="sandcage-taintcheck", description=__doc__.splitlines()[0] if __doc__ else None)
    p.add_argument("paths", nargs="+", help="Python files to check")
    args = p.parse_args(argv)
    results = check(args.paths)
    bad = 0
    for diags in results.values():
        for d in diags:
            print(d)
        bad += bool(diags)
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
