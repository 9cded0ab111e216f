from __future__ import annotations

from sandcage import create_sandbox


def main() -> None:
    sb = create_sandbox()
    state = sb.invoke_ref("rli_create", 4096)
    sb.invoke("rli_read_header", state, 1)
