from __future__ import annotations

from typing import Callable, Iterator

import pytest
from hypothesis import HealthCheck, settings

from sandcage import audit
from sandcage.runtime import Sandbox, create_sandbox

settings.register_profile(
    "sandcage", deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture, HealthCheck.too_slow]
)
settings.load_profile("sandcage")

MiB = 1 << 20
ALL_BACKENDS = ("null", "null-indirect", "emusfi", "process")
ISOLATING = ("emusfi", "process")


@pytest.fixture
def make_sandbox() -> Iterator[Callable[..., Sandbox]]:
    """Factory fixture; everything it creates is destroyed at teardown."""
    made: list[Sandbox] = []

    def make(backend: str = "emusfi", size: int = MiB, **kw: object) -> Sandbox:
        sb = create_sandbox(backend, size, **kw)  # type: ignore[arg-type]
        made.append(sb)
        return sb

    yield make
    for sb in made:
        try:
            sb.destroy()
        except Exception:
            pass


@pytest.fixture
def sb(make_sandbox: Callable[..., Sandbox]) -> Sandbox:
    return make_sandbox("emusfi", MiB)


@pytest.fixture(params=ALL_BACKENDS)
def any_sb(request: pytest.FixtureRequest, make_sandbox: Callable[..., Sandbox]) -> Sandbox:
    return make_sandbox(request.param, MiB)


@pytest.fixture(params=ISOLATING)
def iso_sb(request: pytest.FixtureRequest, make_sandbox: Callable[..., Sandbox]) -> Sandbox:
    return make_sandbox(request.param, MiB)


@pytest.fixture
def audit_lines() -> Iterator[list[str]]:
    lines: list[str] = []
    audit.reset()
    audit.enable(lines.append)
    yield lines
    audit.disable()
    audit.reset()


@pytest.fixture(scope="module")
def shared_sb() -> Iterator[Sandbox]:
    """One emusfi sandbox per module, for property tests."""
    sb = create_sandbox("emusfi", MiB)
    yield sb
    sb.destroy()


# --- acceptance verdicts -------------------------------------------------------------------

VERDICTS = pytest.StashKey[list[str]]()


@pytest.fixture
def verdict(request: pytest.FixtureRequest) -> Callable[[int, str, bool, str], bool]:
    """Record one PASS/FAIL line for an acceptance criterion; printed in the summary."""

    def record(n: int, title: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {n:>2} {title}: {detail}"
        request.config.stash.setdefault(VERDICTS, []).append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter: pytest.TerminalReporter, exitstatus: int, config: pytest.Config) -> None:
    lines = config.stash.get(VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
