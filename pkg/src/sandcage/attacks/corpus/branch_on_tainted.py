from __future__ import annotations

from sandcage import create_sandbox


def main() -> None:
    sb = create_sandbox()
    status = sb.invoke("echo", 2)
    if status == 2:
        print("header ok")
