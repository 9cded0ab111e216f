from __future__ import annotations

from sandcage import TaintedGuestRef, create_sandbox
from sandcage.rli.info import RliInfo


def on_fill(info: TaintedGuestRef) -> int:
    return 0


def main() -> None:
    sb = create_sandbox()
    info = RliInfo(sb.invoke_ref("rli_create", 4096))
    reg = sb.register_callback(on_fill, ["ref:RliInfo"])
    info.fill_input_buffer.write(reg)
