"""Content identifiers and fixed-size chunking."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

DIGEST_SIZE = 32


@dataclass(frozen=True, order=True, eq=True)
class Cid:
    """SHA-256 digest naming a block. Ordered byte-lexicographically."""

    digest: bytes

    def __post_init__(self) -> None:
        if len(self.digest) != DIGEST_SIZE:
            raise ValueError(f"cid digest must be {DIGEST_SIZE} bytes, got {len(self.digest)}")

    def __hash__(self) -> int:
        return hash(self.digest)

    def hex(self) -> str:
        return self.digest.hex()

    def short(self, n: int = 12) -> str:
        return self.digest.hex()[:n]

    @classmethod
    def from_hex(cls, text: str) -> Cid:
        return cls(bytes.fromhex(text))

    def __repr__(self) -> str:
        return f"Cid({self.short()})"


def cid_of(data: bytes) -> Cid:
    if not data:
        raise ValueError("cannot address empty data")
    return Cid(hashlib.sha256(data).digest())


@dataclass(frozen=True)
class Block:
    cid: Cid
    data: bytes = field(repr=False)

    def __post_init__(self) -> None:
        if not self.data:
            raise ValueError("block data must be at least one byte")
        if cid_of(self.data) != self.cid:
            raise ValueError(f"block data does not hash to {self.cid!r}")

    @classmethod
    def from_data(cls, data: bytes) -> Block:
        return cls(cid_of(data), bytes(data))

    @property
    def size(self) -> int:
        return len(self.data)


def chunk_content(data: bytes, block_size: int) -> list[Block]:
    """Split ``data`` into consecutive blocks of ``block_size`` bytes.

    The last block may be shorter. The first block's cid doubles as the
    root cid of the content.
    """
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    return [Block.from_data(data[i : i + block_size]) for i in range(0, len(data), block_size)]
