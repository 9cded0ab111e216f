from __future__ import annotations

from sandcage import Tainted, TaintedGuestRef, create_sandbox
from sandcage.validators import in_range


def on_skip(info: TaintedGuestRef, num_bytes: Tainted[int]) -> None:
    print(num_bytes.verify(in_range(0, 1 << 20)))


def main() -> None:
    sb = create_sandbox()
    sb.register_callback(on_skip, ["ref:RliInfo", "i32"], "void")
