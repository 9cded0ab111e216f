from __future__ import annotations

from sandcage import create_sandbox


def main() -> None:
    sb = create_sandbox()
    state = bytearray(48)  # host memory: the guest must never see its address
    sb.invoke("rli_read_header", state, 1)
