from __future__ import annotations

from sandcage import create_sandbox


def main() -> None:
    sb = create_sandbox()
    palette = [0x000000, 0xFF0000, 0x00FF00, 0x0000FF]
    idx = sb.invoke("echo", 3)
    print(palette[idx])
