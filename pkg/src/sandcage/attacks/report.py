"""Result collection with text and JUnit-style XML output."""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field


@dataclass
class CaseResult:
    suite: str
    name: str
    passed: bool
    outcome: str
    detail: str = ""
    seconds: float = 0.0


@dataclass
class Report:
    title: str
    results: list[CaseResult] = field(default_factory=list)

    def add(self, result: CaseResult) -> CaseResult:
        self.results.append(result)
        return result

    @property
    def ok(self) -> bool:
        return bool(self.results) and all(r.passed for r in self.results)

    @property
    def failures(self) -> list[CaseResult]:
        return [r for r in self.results if not r.passed]

    def count(self, suite: str | None = None) -> tuple[int, int]:
        rs = [r for r in self.results if suite is None or r.suite == suite]
        return sum(r.passed for r in rs), len(rs)

    def to_text(self) -> str:
        lines = [self.title]
        for r in self.results:
            mark = "PASS" if r.passed else "FAIL"
            extra = f" ({r.detail})" if r.detail else ""
            lines.append(f"  {mark} {r.suite}/{r.name}: {r.outcome}{extra}")
        passed, total = self.count()
        lines.append(f"{passed}/{total} passed")
        return "\n".join(lines)

    def to_junit(self) -> str:
        suites = ET.Element("testsuites", name=self.title)
        by_suite: dict[str, list[CaseResult]] = {}
        for r in self.results:
            by_suite.setdefault(r.suite, []).append(r)
        for name, rs in by_suite.items():
            s = ET.SubElement(
                suites,
                "testsuite",
                name=name,
                tests=str(len(rs)),
                failures=str(sum(not r.passed for r in rs)),
                time=f"{sum(r.seconds for r in rs):.3f}",
            )
            for r in rs:
                case = ET.SubElement(s, "testcase", classname=name, name=r.name, time=f"{r.seconds:.3f}")
                if not r.passed:
                    fail = ET.SubElement(case, "failure", message=r.outcome)
                    fail.text = r.detail
                else:
                    out = ET.SubElement(case, "system-out")
                    out.text = f"{r.outcome} {r.detail}".strip()
        ET.indent(suites)
        return ET.tostring(suites, encoding="unicode")

    def write(self, text_path: str | None = None, junit_path: str | None = None) -> None:
        if text_path:
            with open(text_path, "w", encoding="utf-8") as fh:
                fh.write(self.to_text() + "\n")
        if junit_path:
            with open(junit_path, "w", encoding="utf-8") as fh:
                fh.write(self.to_junit() + "\n")
