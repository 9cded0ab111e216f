from __future__ import annotations

from sandcage import create_sandbox, verify
from sandcage.rli.info import RliInfo


def main() -> None:
    sb = create_sandbox()
    info = RliInfo(sb.invoke_ref("rli_create", 4096))
    checked = verify(info, lambda i: i)  # a guest-resident struct can change after the check
    print(checked)
