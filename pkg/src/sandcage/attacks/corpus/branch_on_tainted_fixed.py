from __future__ import annotations

from sandcage import create_sandbox
from sandcage.validators import one_of


def main() -> None:
    sb = create_sandbox()
    status = sb.invoke("echo", 2).verify(one_of({2}))
    if status == 2:
        print("header ok")
