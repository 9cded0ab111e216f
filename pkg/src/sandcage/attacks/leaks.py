"""Scan guest memory for host addresses that should never have reached it."""

from __future__ import annotations

from typing import Iterable

from .. import kernels
from ..runtime import Sandbox


def host_address_targets(sandboxes: Iterable[Sandbox]) -> set[int]:
    """Addresses a leak would expose: region bases, the sandbox objects and every live callback."""
    targets: set[int] = set()
    for sb in sandboxes:
        if not sb.alive:
            continue
        targets.add(sb.base)
        targets.add(id(sb))
        for reg in sb.active_callbacks():
            targets.add(id(reg))
            targets.add(id(reg.fn))
    targets.discard(0)
    return targets


def scan(sb: Sandbox, targets: Iterable[int]) -> list[int]:
    """Byte offsets in ``sb``'s region of any 8-byte window equal to a target (any alignment)."""
    return list(kernels.scan_u64(sb.view, frozenset(targets)))
