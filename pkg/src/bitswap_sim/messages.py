"""Bitswap wire messages as in-memory values, plus a canonical JSON form."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Any

from bitswap_sim.cid import Block, Cid


class ProtocolError(Exception):
    """A malformed message or an impossible protocol step (a simulation bug)."""


class WantType(str, Enum):
    HAVE = "have"
    BLOCK = "block"


class Presence(str, Enum):
    HAVE = "have"
    DONT_HAVE = "dont-have"


@dataclass(frozen=True)
class WantlistEntry:
    cid: Cid
    want_type: WantType = WantType.HAVE
    cancel: bool = False
    send_dont_have: bool = True
    priority: int = 1
    # Remaining hop budget; None when hop limiting is disabled.
    ttl: int | None = None

    @property
    def kind(self) -> str:
        if self.cancel:
            return "cancel"
        return "want-have" if self.want_type is WantType.HAVE else "want-block"

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "cid": self.cid.hex(),
            "cancel": self.cancel,
            "priority": self.priority,
            "send_dont_have": self.send_dont_have,
            "want_type": self.want_type.value,
        }
        if self.ttl is not None:
            d["ttl"] = self.ttl
        return d


@dataclass(frozen=True)
class BitswapMessage:
    entries: tuple[WantlistEntry, ...] = ()
    blocks: tuple[Block, ...] = ()
    presences: tuple[tuple[Cid, Presence], ...] = ()

    def __post_init__(self) -> None:
        if not (self.entries or self.blocks or self.presences):
            raise ProtocolError("empty bitswap message")
        if len({e.cid for e in self.entries}) != len(self.entries):
            raise ProtocolError("duplicate cid in wantlist entries")
        if len({c for c, _ in self.presences}) != len(self.presences):
            raise ProtocolError("duplicate cid in block presences")

    def items(self) -> list[tuple[str, Cid]]:
        """Flatten to (kind, cid) pairs: entries, then presences, then blocks."""
        out = [(e.kind, e.cid) for e in self.entries]
        out.extend((p.value, c) for c, p in self.presences)
        out.extend(("block", b.cid) for b in self.blocks)
        return out

    def want_haves(self) -> list[Cid]:
        return [e.cid for e in self.entries if not e.cancel and e.want_type is WantType.HAVE]

    def to_dict(self) -> dict[str, Any]:
        return {
            "blocks": [{"cid": b.cid.hex(), "size": b.size} for b in self.blocks],
            "entries": [e.to_dict() for e in self.entries],
            "presences": [{"cid": c.hex(), "type": p.value} for c, p in self.presences],
        }

    def to_json(self) -> str:
        """Canonical rendering: sorted keys, no insignificant whitespace."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def merge_messages(messages: list[BitswapMessage]) -> BitswapMessage:
    """Combine messages bound for the same peer at the same instant.

    Later items for a cid already present are dropped.
    """
    entries: dict[Cid, WantlistEntry] = {}
    blocks: dict[Cid, Block] = {}
    presences: dict[Cid, Presence] = {}
    for m in messages:
        for e in m.entries:
            entries.setdefault(e.cid, e)
        for b in m.blocks:
            blocks.setdefault(b.cid, b)
        for c, p in m.presences:
            presences.setdefault(c, p)
    return BitswapMessage(tuple(entries.values()), tuple(blocks.values()), tuple(presences.items()))
