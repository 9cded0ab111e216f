"""``sandcage bench``: microbenchmarks with JSON or CSV reports.

Exit status: 0 ok, 2 usage error, 3 an ``--assert`` check failed.
"""

from __future__ import annotations

import argparse
import operator
import re
import sys
from typing import Any, Callable, Sequence

from ..runtime import BACKENDS, default_region_size
from . import runs
from .report import BenchReport, to_csv

EXIT_USAGE = 2
EXIT_ASSERT = 3

_OPS: dict[str, Callable[[float, float], bool]] = {
    "<=": operator.le,
    ">=": operator.ge,
    "<": operator.lt,
    ">": operator.gt,
    "==": operator.eq,
}
_CHECK = re.compile(r"^\s*([A-Za-z_][\w.]*)\s*(<=|>=|==|<|>)\s*([-+0-9.eE]+)\s*$")


def _positive(text: str) -> int:
    try:
        n = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n <= 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return n


def _nonneg(text: str) -> int:
    n = int(text, 0)
    if n < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return n


def _backends(text: str) -> list[str]:
    names = [b.strip() for b in text.split(",") if b.strip()]
    bad = [b for b in names if b not in BACKENDS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown backend {', '.join(bad) or text!r}; choose from {', '.join(BACKENDS)}")
    return names


def _syncs(text: str) -> list[str]:
    names = [s.strip().lower() for s in text.split(",") if s.strip()]
    if not names or any(s not in ("spin", "event") for s in names):
        raise argparse.ArgumentTypeError("sync must be spin, event or spin,event")
    return names


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sandcage bench", description="Sandbox microbenchmarks.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--region-size", type=_positive, default=None, help="region bytes (default: $SANDCAGE_REGION_SIZE or 64 MiB)")
    common.add_argument("--csv", action="store_true", help="emit CSV instead of JSON lines")
    common.add_argument("--out", default="-", help="report file (default: stdout)")
    common.add_argument("--assert", dest="checks", action="append", default=[], metavar="CHECK",
                        help="e.g. 'p50<20000', 'params.relative_overhead<=3' or 'ordering'; failure exits 3")
    sub = p.add_subparsers(dest="bench", required=True)

    t = sub.add_parser("transfer-latency", parents=[common], help="empty-call round trip")
    t.add_argument("--backend", type=_backends, default=["emusfi"], help="one or more, comma separated")
    t.add_argument("--sync", type=_syncs, default=["event"], help="process backend: spin, event or both")
    t.add_argument("--iters", type=_positive, default=100_000)
    t.add_argument("--warmup", type=_nonneg, default=runs.WARMUP)

    c = sub.add_parser("creation", parents=[common], help="time to a usable sandbox")
    c.add_argument("--backend", type=_backends, default=["emusfi"])
    c.add_argument("--count", type=_positive, default=200)
    c.add_argument("--warmup", type=_nonneg, default=10)

    s = sub.add_parser("scaling", parents=[common], help="K concurrent sandboxes")
    s.add_argument("--sandboxes", type=_positive, default=64)
    s.add_argument("--image", default=None, help="RLI file (default: a seeded random image)")
    s.add_argument("--backend", type=_backends, default=["emusfi"])
    s.add_argument("--threads", type=_positive, default=None, help="default: min(K, cores)")
    s.add_argument("--rounds", type=_positive, default=1)
    s.add_argument("--mem-batch", type=_positive, default=None, help="sandboxes per memory sample (default: K/8)")

    d = sub.add_parser("decode", parents=[common], help="decode throughput against the null backend")
    d.add_argument("--backend", type=_backends, default=["emusfi"])
    d.add_argument("--sync", type=_syncs, default=["event"])
    d.add_argument("--corpus", default=None, help="directory of .rli files (default: seeded random images)")
    d.add_argument("--images", type=_positive, default=50)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--warmup", type=_nonneg, default=10)
    return p


def _field(report: BenchReport, path: str) -> float:
    d: Any = report.to_dict()
    for part in path.split("."):
        if not isinstance(d, dict) or part not in d:
            raise KeyError(path)
        d = d[part]
    if d is None:
        raise KeyError(path)
    return float(d)


def check_ordering(reports: Sequence[BenchReport]) -> list[str]:
    """Latency ordering: null < process-SPIN < process-EVENT, EVENT/SPIN >= 3, emusfi <= 20x null."""
    p50: dict[str, float] = {}
    for r in reports:
        key = r.backend if r.backend != "process" else f"process-{r.params.get('sync') or 'event'}"
        p50[key] = r.p50
    failures = []
    null = p50.get("null", p50.get("null-indirect"))
    spin, event, sfi = p50.get("process-spin"), p50.get("process-event"), p50.get("emusfi")
    if null is None or spin is None or event is None:
        return ["ordering needs null, process --sync spin and process --sync event"]
    if not null < spin < event:
        failures.append(f"expected null < process-spin < process-event, got {null:.0f} / {spin:.0f} / {event:.0f} ns")
    if event / spin < 3:
        failures.append(f"process EVENT/SPIN = {event / spin:.2f}, expected >= 3")
    if sfi is not None and sfi > 20 * null:
        failures.append(f"emusfi/null = {sfi / null:.2f}, expected <= 20")
    return failures


def evaluate(checks: Sequence[str], reports: Sequence[BenchReport]) -> list[str]:
    failures: list[str] = []
    for chk in checks:
        if chk.strip() == "ordering":
            failures += check_ordering(reports)
            continue
        m = _CHECK.match(chk)
        if not m:
            raise ValueError(f"bad check {chk!r}")
        path, op, value = m.group(1), m.group(2), float(m.group(3))
        for r in reports:
            got = _field(r, path)
            if not _OPS[op](got, value):
                failures.append(f"{r.bench}/{r.backend}: {path} = {got:g}, expected {op} {value:g}")
    return failures


def run(args: argparse.Namespace) -> list[BenchReport]:
    size = args.region_size or default_region_size()
    out: list[BenchReport] = []
    if args.bench == "transfer-latency":
        for b in args.backend:
            for sync in (args.sync if b == "process" else [None]):
                out.append(runs.transfer_latency(b, sync=sync, iters=args.iters, warmup=args.warmup, region_size=size))
    elif args.bench == "creation":
        for b in args.backend:
            out.append(runs.creation(b, count=args.count, warmup=args.warmup, region_size=size))
    elif args.bench == "scaling":
        if args.image:
            with open(args.image, "rb") as fh:
                image = fh.read()
        else:
            image = runs.default_image()
        for b in args.backend:
            out.append(
                runs.scaling(
                    args.sandboxes, image, backend=b, threads=args.threads, region_size=size,
                    rounds=args.rounds, mem_batch=args.mem_batch,
                )
            )
    elif args.bench == "decode":
        corpus = runs.load_corpus(args.corpus, images=args.images, seed=args.seed)
        for b in args.backend:
            for sync in (args.sync if b == "process" else [None]):
                out.append(runs.decode(b, corpus, warmup=args.warmup, region_size=size, sync=sync))
    return out


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    for chk in args.checks:
        if chk.strip() != "ordering" and not _CHECK.match(chk):
            parser.print_usage(sys.stderr)
            print(f"sandcage bench: error: bad --assert {chk!r}", file=sys.stderr)
            return EXIT_USAGE
    try:
        reports = run(args)
    except (OSError, ValueError) as exc:
        print(f"sandcage bench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = to_csv(reports) if args.csv else "".join(r.to_json() + "\n" for r in reports)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    try:
        failures = evaluate(args.checks, reports)
    except KeyError as exc:
        print(f"sandcage bench: error: no field {exc} in the report", file=sys.stderr)
        return EXIT_USAGE
    for f in failures:
        print(f"assertion failed: {f}", file=sys.stderr)
    return EXIT_ASSERT if failures else 0
