from __future__ import annotations

from sandcage import create_sandbox
from sandcage.validators import in_range


def main() -> None:
    sb = create_sandbox()
    palette = [0x000000, 0xFF0000, 0x00FF00, 0x0000FF]
    idx = sb.invoke("echo", 3).verify(in_range(0, len(palette) - 1))
    print(palette[idx])
