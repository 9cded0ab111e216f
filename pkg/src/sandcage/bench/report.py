"""Benchmark report schema and percentile summary."""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass, field
from typing import Any, Sequence

FIELDS = ("bench", "backend", "params", "samples", "p50", "p90", "p99", "mem_bytes_per_sandbox")


def percentiles(samples: Sequence[float]) -> tuple[float, float, float]:
    """(p50, p90, p99) with inclusive linear interpolation."""
    if not samples:
        raise ValueError("no samples")
    if len(samples) == 1:
        v = float(samples[0])
        return v, v, v
    q = statistics.quantiles(samples, n=100, method="inclusive")
    return q[49], q[89], q[98]


@dataclass
class BenchReport:
    bench: str
    backend: str
    params: dict[str, Any]
    samples: list[float] = field(repr=False)
    mem_bytes_per_sandbox: float | None = None

    @property
    def p50(self) -> float:
        return percentiles(self.samples)[0]

    @property
    def p90(self) -> float:
        return percentiles(self.samples)[1]

    @property
    def p99(self) -> float:
        return percentiles(self.samples)[2]

    def to_dict(self) -> dict[str, Any]:
        p50, p90, p99 = percentiles(self.samples)
        out: dict[str, Any] = {
            "bench": self.bench,
            "backend": self.backend,
            "params": self.params,
            "samples": len(self.samples),
            "p50": p50,
            "p90": p90,
            "p99": p99,
        }
        if self.mem_bytes_per_sandbox is not None:
            out["mem_bytes_per_sandbox"] = self.mem_bytes_per_sandbox
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)


def to_csv(reports: Sequence[BenchReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        row = r.to_dict()
        row["params"] = json.dumps(row["params"], sort_keys=True)
        row.setdefault("mem_bytes_per_sandbox", "")
        w.writerow(row)
    return buf.getvalue()
