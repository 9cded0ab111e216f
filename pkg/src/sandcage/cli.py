"""``sandcage`` command: dispatches to the bench, attacks, taintcheck and worker tools."""

from __future__ import annotations

import sys
from typing import Callable, Sequence

USAGE = """usage: sandcage <command> [args]

commands:
  bench        microbenchmarks (transfer-latency, creation, scaling, decode)
  attacks      runtime attack regression and static rejection corpus
  taintcheck   type-check host code against the tainted-data discipline
  worker       process-backend worker (started by the host, not by hand)
"""


def _bench(argv: Sequence[str]) -> int:
    from .bench.cli import main

    return main(argv)


def _attacks(argv: Sequence[str]) -> int:
    from .attacks.cli import main

    return main(argv)


def _taintcheck(argv: Sequence[str]) -> int:
    from .attacks.taintcheck import main

    return main(argv)


def _worker(argv: Sequence[str]) -> int:
    from .worker import main

    return main(argv)


COMMANDS: dict[str, Callable[[Sequence[str]], int]] = {
    "bench": _bench,
    "attacks": _attacks,
    "taintcheck": _taintcheck,
    "worker": _worker,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = list(sys.argv[1:] if argv is None else argv)
    if not args or args[0] in ("-h", "--help"):
        sys.stdout.write(USAGE)
        return 0 if args else 2
    cmd = COMMANDS.get(args[0])
    if cmd is None:
        sys.stderr.write(f"sandcage: unknown command {args[0]!r}\n{USAGE}")
        return 2
    return cmd(args[1:])


if __name__ == "__main__":
    sys.exit(main())
