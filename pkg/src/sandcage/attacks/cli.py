"""``sandcage attacks``: run the attack regression and write text / JUnit reports."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .report import CaseResult, Report


def main(argv: Sequence[str] | None = None) -> int:
    p = argparse.ArgumentParser(prog="sandcage attacks", description=__doc__.splitlines()[0] if __doc__ else None)
    p.add_argument("suite", choices=("runtime", "static", "all"), nargs="?", default="all")
    p.add_argument("--backend", action="append", choices=("emusfi", "process"), help="runtime backends (default: both)")
    p.add_argument("--runs", type=int, default=5, help="decodes per runtime case")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--isolated", action="store_true", help="one checker process per static corpus file")
    p.add_argument("--junit", metavar="PATH", help="write JUnit-style XML here")
    p.add_argument("--text", metavar="PATH", help="write the text report here")
    p.add_argument("-q", "--quiet", action="store_true")
    args = p.parse_args(argv)

    combined = Report("attack regression")

    def show(r: CaseResult) -> None:
        if not args.quiet:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.suite}/{r.name}: {r.outcome}", flush=True)

    if args.suite in ("runtime", "all"):
        from .runtime import ISOLATING_BACKENDS, run_runtime_attacks

        rt = run_runtime_attacks(tuple(args.backend or ISOLATING_BACKENDS), runs=args.runs, seed=args.seed, progress=show)
        combined.results += rt.results
    if args.suite in ("static", "all"):
        from .static import run_static_rejections

        st = run_static_rejections(isolated=args.isolated)
        for r in st.results:
            show(r)
        combined.results += st.results
    combined.write(args.text, args.junit)
    passed, total = combined.count()
    print(f"{passed}/{total} cases passed")
    return 0 if combined.ok else 1


if __name__ == "__main__":
    sys.exit(main())
