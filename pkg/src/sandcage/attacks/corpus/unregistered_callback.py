from __future__ import annotations

from sandcage import TaintedGuestRef, create_sandbox
from sandcage.rli.info import RliInfo


def on_fill(info: TaintedGuestRef) -> int:
    return 0


def main() -> None:
    sb = create_sandbox()
    info = RliInfo(sb.invoke_ref("rli_create", 4096))
    info.fill_input_buffer.write(on_fill)
