from __future__ import annotations

from sandcage import create_sandbox
from sandcage.rli.info import RliInfo


def main() -> None:
    sb = create_sandbox()
    info = RliInfo(sb.invoke_ref("rli_create", 4096))
    staging = bytearray(4096)
    info.next_input_offset.write(staging)
