"""Runtime attack regression: run each hostile guest build and classify the outcome.

A case passes ("blocked") when the host either rejects the attack with the
expected typed error or finishes with output identical to the trusted
oracle, and never acts on attacker-controlled data.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass
from typing import Callable

from ..errors import (
    BoundsViolation,
    CallbackViolation,
    DecodeError,
    GuestAbort,
    SandboxError,
    TamperViolation,
    ValidationError,
)
from ..rli.format import encode, oracle_decode, random_image
from ..rli.host import decode_with
from ..runtime import Sandbox, create_sandbox
from .leaks import host_address_targets, scan
from .report import CaseResult, Report

ISOLATING_BACKENDS = ("emusfi", "process")


@dataclass(frozen=True)
class Attack:
    name: str
    variant: str
    summary: str
    expected: tuple[type[BaseException], ...]


ATTACKS = (
    Attack("M1", "m1", "oversized output_scanline", (ValidationError,)),
    Attack("M2", "m2", "next_input_offset outside the region", (BoundsViolation,)),
    Attack("M3", "m3", "forged callback slot", (CallbackViolation,)),
    Attack("M4", "m4", "callback before the host registered anything", (CallbackViolation, GuestAbort, DecodeError)),
    Attack("M5", "m5", "double-fetch mutator on output_scanline", (TamperViolation, ValidationError)),
    Attack("M6", "m6", "host-address guesses planted in shared memory", ()),
    Attack("M7", "m7", "another invocation's client token", ()),
    Attack("M8", "m8", "negative skip_input_data", (ValidationError,)),
)


def _images(rng: random.Random, n: int, max_dim: int = 24) -> list[tuple[bytes, bytes]]:
    out = []
    for _ in range(n):
        w, h, px = random_image(rng, max_dim, max_dim)
        data = encode(px, w, h)
        out.append((data, oracle_decode(data)[2]))
    return out


def _decode_once(sb: Sandbox, data: bytes, want: bytes, chunk: int, **kw: object) -> tuple[str, str]:
    try:
        _, _, got = decode_with(sb, data, chunk=chunk, **kw)  # type: ignore[arg-type]
    except SandboxError as exc:
        return type(exc).__name__, str(exc)
    return ("correct" if got == want else "WRONG OUTPUT"), ""


def _run_attack(attack: Attack, backend: str, rng: random.Random, runs: int) -> CaseResult:
    start = time.perf_counter()
    sb = create_sandbox(backend, 1 << 20, guest=f"rli:{attack.variant}")
    expected = {e.__name__ for e in attack.expected}
    outcomes: dict[str, int] = {}
    passed = True
    detail = ""
    try:
        if attack.name == "M6":
            leaks: list[int] = []

            def probe(s: Sandbox) -> None:
                leaks.extend(scan(s, host_address_targets([s])))

            for data, want in _images(rng, runs):
                out, why = _decode_once(sb, data, want, rng.randint(16, 96), probe=probe)
                outcomes[out] = outcomes.get(out, 0) + 1
                passed &= out == "correct"
            leaks.extend(scan(sb, host_address_targets([sb])))
            passed &= not leaks
            detail = f"{len(leaks)} host-address windows found"
        elif attack.name == "M7":
            # alternate two streams through one sandbox; the guest keeps handing back the other one's token
            imgs = _images(rng, 2 * runs)
            for data, want in imgs:
                out, why = _decode_once(sb, data, want, rng.randint(8, 40))
                outcomes[out] = outcomes.get(out, 0) + 1
                passed &= out == "correct"
        else:
            for data, want in _images(rng, runs):
                out, why = _decode_once(sb, data, want, rng.randint(16, 96))
                outcomes[out] = outcomes.get(out, 0) + 1
                ok = out in expected or (attack.name == "M5" and out == "correct")
                if not ok:
                    detail = detail or f"{out}: {why}"
                passed &= ok
            if attack.name in ("M1", "M2", "M3", "M8"):
                # the attack fires on every decode, so it must have been rejected every time
                passed &= "correct" not in outcomes
        passed &= "WRONG OUTPUT" not in outcomes
        # a blocked attack leaves the sandbox usable
        passed &= sb.alive and sb.invoke("echo", 7).verify(lambda v: v) == 7
    finally:
        sb.destroy()
    summary = ", ".join(f"{k} x{v}" for k, v in sorted(outcomes.items()))
    return CaseResult(backend, f"{attack.name} {attack.summary}", passed, summary, detail, time.perf_counter() - start)


def _run_clean(backend: str, rng: random.Random, runs: int) -> CaseResult:
    start = time.perf_counter()
    sb = create_sandbox(backend, 1 << 20)
    try:
        bad = 0
        for data, want in _images(rng, runs):
            out, _ = _decode_once(sb, data, want, rng.randint(8, 200))
            bad += out != "correct"
        violations = sum(sb.violation_counts.values())
    finally:
        sb.destroy()
    ok = bad == 0 and violations == 0
    return CaseResult(backend, "clean control", ok, f"{runs - bad}/{runs} correct, {violations} violations", "", time.perf_counter() - start)


def run_runtime_attacks(
    backends: tuple[str, ...] = ISOLATING_BACKENDS,
    *,
    runs: int = 5,
    seed: int = 0,
    progress: Callable[[CaseResult], None] | None = None,
) -> Report:
    """Run every attack class (plus a clean control) on each backend."""
    report = Report("runtime attacks")
    rng = random.Random(seed)
    for backend in backends:
        for result in [_run_clean(backend, rng, runs)] + [_run_attack(a, backend, rng, runs) for a in ATTACKS]:
            report.add(result)
            if progress:
                progress(result)
    return report


def freeze_race(backend: str = "emusfi", runs: int = 10_000, *, seed: int = 0, max_dim: int = 6) -> dict[str, int]:
    """Decode tiny images against the M5 mutator ``runs`` times; tally outcomes.

    Outcomes: ``correct`` (host used the legitimate value), a violation or
    validation error name (the attacker's value was refused), or ``WRONG
    OUTPUT`` (the attacker's value was consumed; must never happen).
    """
    import sys

    rng = random.Random(seed)
    tally: dict[str, int] = {}
    old = sys.getswitchinterval()
    sys.setswitchinterval(5e-5)  # interleave the mutator as often as possible
    sb = create_sandbox(backend, 1 << 20, guest="rli:m5")
    try:
        for _ in range(runs):
            w, h, px = random_image(rng, max_dim, max_dim)
            data = encode(px, w, h)
            out, _ = _decode_once(sb, data, px, 64)
            tally[out] = tally.get(out, 0) + 1
    finally:
        sb.destroy()
        sys.setswitchinterval(old)
    return tally
