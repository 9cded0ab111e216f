"""Attack regression: hostile guest builds at runtime, discipline breaches statically."""

from .report import CaseResult, Report

__all__ = ["CaseResult", "Report"]
