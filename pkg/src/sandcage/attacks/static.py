"""Static rejection harness: every corpus program must fail the type check, every fixed twin must pass.

Each entry is checked for a failing status and a diagnostic matching the
entry's pattern, so an entry that fails for an unrelated reason (a typo, a
missing import) does not count as a rejection.
"""

from __future__ import annotations

import os
import re
import subprocess
import sys
import time
from dataclasses import dataclass

from .report import CaseResult, Report
from .taintcheck import Diagnostic, check

CORPUS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "corpus")


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    description: str
    pattern: str

    @property
    def path(self) -> str:
        return os.path.join(CORPUS_DIR, f"{self.name}.py")

    @property
    def fixed_path(self) -> str:
        return os.path.join(CORPUS_DIR, f"{self.name}_fixed.py")


CORPUS = (
    CorpusEntry("branch_on_tainted", "branch on Tainted[bool]", r"tainted value used as an? .*\[tainted-condition\]"),
    CorpusEntry("host_ref_into_invoke", "host ref into invoke", r'Argument 2 to "invoke" of "Sandbox" has incompatible type'),
    CorpusEntry("verify_aggregate", "verify on a guest-resident aggregate", r'Argument 1 to "verify" has incompatible type "RliInfo"'),
    CorpusEntry("unregistered_callback", "plain function stored as a callback", r'Argument 1 to "write" of "CallbackVolatile" has incompatible type'),
    CorpusEntry("freezable_unfrozen", "freezable field read without freeze", r'"FreezableCell" has no attribute "read"'),
    CorpusEntry("tainted_loop_bound", "tainted arithmetic as a host loop bound", r'No overload variant of "range" matches argument type "Tainted'),
    CorpusEntry("deref_raw_offset", "dereference of an unwrapped guest offset", r'"__getitem__" of "memoryview" matches argument type "Tainted'),
    CorpusEntry("host_ref_into_record", "host ref stored into a guest record", r'Argument 1 to "write" of "RefVolatile" has incompatible type'),
    CorpusEntry("callback_untainted_params", "callback with untainted parameters", r'Argument 1 to "register_callback" of "Sandbox" has incompatible type'),
    CorpusEntry("tainted_index", "host array indexed by a tainted value", r'No overload variant of "__getitem__" of "list" matches argument type "Tainted'),
)


def _check_isolated(path: str) -> tuple[int, list[str]]:
    """Run the checker CLI on one file in a fresh interpreter; return (status, diagnostic lines)."""
    proc = subprocess.run(
        [sys.executable, "-m", "sandcage.attacks.taintcheck", path],
        capture_output=True,
        text=True,
    )
    return proc.returncode, [ln for ln in proc.stdout.splitlines() if ": error: " in ln]


def _judge(entry: CorpusEntry, bad: tuple[int, list[str]], good: tuple[int, list[str]], seconds: float) -> list[CaseResult]:
    status, diags = bad
    hit = next((d for d in diags if re.search(entry.pattern, d)), None)
    rejected = status != 0 and hit is not None
    if rejected:
        outcome = "rejected"
        detail = hit.split(": error: ", 1)[-1] if hit else ""
    elif status != 0:
        outcome = "rejected for the wrong reason"
        detail = "; ".join(d.split(": error: ", 1)[-1] for d in diags[:3])
    else:
        outcome = "accepted"
        detail = "expected a type error"
    gstatus, gdiags = good
    twin_ok = gstatus == 0 and not gdiags
    return [
        CaseResult("static", f"{entry.name}: {entry.description}", rejected, outcome, detail, seconds),
        CaseResult(
            "static-twins",
            f"{entry.name}_fixed",
            twin_ok,
            "accepted" if twin_ok else "rejected",
            "; ".join(d.split(": error: ", 1)[-1] for d in gdiags[:3]),
            0.0,
        ),
    ]


def _as_result(diags: list[Diagnostic]) -> tuple[int, list[str]]:
    return (1 if diags else 0), [str(d) for d in diags]


def run_static_rejections(entries: tuple[CorpusEntry, ...] = CORPUS, *, isolated: bool = False) -> Report:
    """Check every corpus entry and its fixed twin.

    By default all files go through one checker build (errors are attributed
    per file, so each file gets its own status).  ``isolated=True`` runs a
    separate checker process per file instead, which is slower.
    """
    report = Report("static rejections")
    if isolated:
        for e in entries:
            start = time.perf_counter()
            bad, good = _check_isolated(e.path), _check_isolated(e.fixed_path)
            for r in _judge(e, bad, good, time.perf_counter() - start):
                report.add(r)
        return report
    start = time.perf_counter()
    results = check([p for e in entries for p in (e.path, e.fixed_path)])
    per_file = (time.perf_counter() - start) / max(1, 2 * len(entries))
    for e in entries:
        bad = _as_result(results.get(e.path, []))
        good = _as_result(results.get(e.fixed_path, []))
        for r in _judge(e, bad, good, 2 * per_file):
            report.add(r)
    return report
