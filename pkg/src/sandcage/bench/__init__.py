"""Latency, creation, scaling and decode benchmarks."""

from .report import BenchReport, percentiles, to_csv
from .runs import creation, decode, scaling, transfer_latency

__all__ = ["BenchReport", "creation", "decode", "percentiles", "scaling", "to_csv", "transfer_latency"]
