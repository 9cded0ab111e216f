from __future__ import annotations

from sandcage import create_sandbox
from sandcage.rli.info import RliInfo
from sandcage.validators import in_range


def main() -> None:
    sb = create_sandbox()
    info = RliInfo(sb.invoke_ref("rli_create", 4096))
    rows = (info.height.read() + 1).verify(in_range(1, 1 << 14))
    for row in range(rows):
        print(row)
