from __future__ import annotations

from sandcage import create_sandbox


def on_skip(info_offset: int, num_bytes: int) -> None:
    print(info_offset, num_bytes)


def main() -> None:
    sb = create_sandbox()
    sb.register_callback(on_skip, ["ref:RliInfo", "i32"], "void")
