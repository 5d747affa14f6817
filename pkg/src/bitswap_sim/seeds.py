from __future__ import annotations

import hashlib


def derive_seed(*parts: object) -> int:
    """Stable 64-bit seed from arbitrary parts; independent of PYTHONHASHSEED."""
    text = "\x1f".join(repr(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")
