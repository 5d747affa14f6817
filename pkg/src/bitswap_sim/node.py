"""Per-peer Bitswap state machine with relay sessions.

A :class:`NodeState` has no clock and no transport. Every operation takes
the current simulated time and returns the :class:`TimedSend` list the
caller must put on the wire.
"""

from __future__ import annotations

import logging
import random
from collections import defaultdict
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field

from bitswap_sim.cid import Block, Cid
from bitswap_sim.messages import (
    BitswapMessage,
    Presence,
    ProtocolError,
    WantlistEntry,
    WantType,
    merge_messages,
)
from bitswap_sim.seeds import derive_seed
from bitswap_sim.spreading import Immediate, SpreadingStrategy, schedule_spread

log = logging.getLogger(__name__)

PeerId = str

SMALL_BLOCK_THRESHOLD = 1024
SWEEP_INTERVAL_MS = 500.0


@dataclass(frozen=True)
class NodeConfig:
    strategy: SpreadingStrategy = field(default_factory=Immediate)
    forwarding: bool = False
    hop_limit: int | None = None
    small_block_threshold: int = SMALL_BLOCK_THRESHOLD
    sweep_interval: float = SWEEP_INTERVAL_MS

    def __post_init__(self) -> None:
        if self.hop_limit is not None and self.hop_limit < 1:
            raise ValueError("hop_limit must be a positive integer or None")
        if self.sweep_interval <= 0:
            raise ValueError("sweep_interval must be > 0")


@dataclass(frozen=True)
class TimedSend:
    at: float
    to: PeerId
    message: BitswapMessage


@dataclass
class ClientSession:
    session_id: int
    wanted_cids: set[Cid]
    received_cids: set[Cid] = field(default_factory=set)
    # peers that answered DONT-HAVE, and whether any HAVE/BLOCK came back
    dont_have_from: set[PeerId] = field(default_factory=set)
    saw_provider: bool = False
    is_relay: bool = False

    @property
    def complete(self) -> bool:
        return self.received_cids >= self.wanted_cids


@dataclass
class RelaySession:
    interests: dict[Cid, set[PeerId]] = field(default_factory=dict)
    # cids whose WANT-HAVE this node already spread, own wants included
    forwarded: set[Cid] = field(default_factory=set)
    # every peer we ever sent a WANT-HAVE for the cid; never shrinks
    asked: dict[Cid, set[PeerId]] = field(default_factory=dict)

    def live_interests(self, cid: Cid) -> set[PeerId]:
        """Interested peers that are not merely echoing our own request back."""
        return self.interests.get(cid, set()) - self.asked.get(cid, set())

    def add(self, cid: Cid, peer: PeerId) -> None:
        self.interests.setdefault(cid, set()).add(peer)

    def discard(self, cid: Cid, peer: PeerId) -> bool:
        """Drop one interest; True when the cid has no interested peer left."""
        peers = self.interests.get(cid)
        if peers is None:
            return False
        peers.discard(peer)
        if peers:
            return False
        del self.interests[cid]
        return True


@dataclass
class SentWant:
    want_type: WantType
    at: float


class PeerWantLedger:
    """Wants this node has put on the wire, per peer and cid."""

    def __init__(self) -> None:
        self.sent: dict[PeerId, dict[Cid, SentWant]] = defaultdict(dict)
        # cid -> peer holding our single outstanding WANT-BLOCK
        self.block_requests: dict[Cid, PeerId] = {}

    def is_outstanding(self, peer: PeerId, cid: Cid, want_type: WantType) -> bool:
        w = self.sent.get(peer, {}).get(cid)
        return w is not None and w.want_type is want_type

    def record(self, peer: PeerId, cid: Cid, want_type: WantType, at: float) -> bool:
        """Record a want; False if the identical want is already outstanding."""
        prev = self.sent[peer].get(cid)
        # an outstanding WANT-BLOCK subsumes a WANT-HAVE
        if prev is not None and (prev.want_type is want_type or prev.want_type is WantType.BLOCK):
            return False
        self.sent[peer][cid] = SentWant(want_type, max(at, prev.at) if prev else at)
        if want_type is WantType.BLOCK:
            self.block_requests[cid] = peer
        return True

    def peers_wanting(self, cid: Cid) -> list[PeerId]:
        return sorted(p for p, wants in self.sent.items() if cid in wants)

    def has_any(self, cid: Cid) -> bool:
        return any(cid in wants for wants in self.sent.values())

    def outstanding_cids(self) -> set[Cid]:
        return {c for wants in self.sent.values() for c in wants}

    def clear(self, peer: PeerId, cid: Cid) -> SentWant | None:
        wants = self.sent.get(peer)
        w = wants.pop(cid, None) if wants else None
        if self.block_requests.get(cid) == peer:
            del self.block_requests[cid]
        return w

    @property
    def pending(self) -> int:
        return sum(len(w) for w in self.sent.values())


class NodeState:
    """One honest peer: blockstore, client sessions, relay session, want ledger."""

    def __init__(
        self,
        node_id: PeerId,
        neighbors: Sequence[PeerId],
        config: NodeConfig | None = None,
        seed: int = 0,
    ) -> None:
        if node_id in neighbors:
            raise ValueError(f"{node_id} cannot neighbor itself")
        if len(set(neighbors)) != len(neighbors):
            raise ValueError(f"duplicate neighbors for {node_id}")
        self.id = node_id
        self.neighbors: list[PeerId] = list(neighbors)
        self.config = config or NodeConfig()
        self.blockstore: dict[Cid, Block] = {}
        self.client_sessions: list[ClientSession] = []
        self.relay_session = RelaySession()
        self.ledger = PeerWantLedger()
        self.rng = random.Random(derive_seed(seed, node_id))

    def __repr__(self) -> str:
        return f"NodeState({self.id!r}, blocks={len(self.blockstore)})"

    # -- local state -------------------------------------------------------

    def put_block(self, block: Block) -> bool:
        """Store a block; False if it was already held."""
        if block.cid in self.blockstore:
            return False
        self.blockstore[block.cid] = block
        return True

    def add_neighbor(self, peer: PeerId) -> None:
        if peer == self.id:
            raise ValueError("cannot connect to self")
        if peer not in self.neighbors:
            self.neighbors.append(peer)

    def wants_for_self(self, cid: Cid) -> bool:
        return any(cid in s.wanted_cids and cid not in s.received_cids for s in self.client_sessions)

    def _wants(self, cid: Cid) -> bool:
        return cid not in self.blockstore and (
            self.wants_for_self(cid) or bool(self.relay_session.live_interests(cid))
        )

    # -- spreading ---------------------------------------------------------

    def schedule_spread(
        self,
        targets: Sequence[PeerId],
        payload_per_peer: Callable[[PeerId, float], BitswapMessage | None],
        now: float,
    ) -> list[TimedSend]:
        """Schedule one message per target following the node's strategy.

        ``payload_per_peer(peer, at)`` may return None to skip a peer.
        """
        sends = []
        for at, peer in schedule_spread(self.config.strategy, self.rng, targets, now):
            msg = payload_per_peer(peer, at)
            if msg is not None:
                sends.append(TimedSend(at, peer, msg))
        return sends

    def _spread_want_haves(
        self, cids: list[Cid], targets: Sequence[PeerId], now: float, ttl: int | None
    ) -> list[TimedSend]:
        def payload(peer: PeerId, at: float) -> BitswapMessage | None:
            fresh = [c for c in cids if self.ledger.record(peer, c, WantType.HAVE, at)]
            if not fresh:
                return None
            for c in fresh:
                self.relay_session.asked.setdefault(c, set()).add(peer)
            return BitswapMessage(
                tuple(WantlistEntry(c, WantType.HAVE, send_dont_have=True, ttl=ttl) for c in fresh)
            )

        return self.schedule_spread(targets, payload, now)

    def _spread_cancels(
        self, cids: Iterable[Cid], now: float, exclude: PeerId | None = None
    ) -> list[TimedSend]:
        """Cancel every outstanding want for ``cids``.

        A CANCEL never leaves before the want it withdraws, so links stay FIFO.
        """
        cids = sorted(set(cids))
        per_peer: dict[PeerId, list[Cid]] = {}
        for cid in cids:
            for peer in self.ledger.peers_wanting(cid):
                if peer == exclude:
                    self.ledger.clear(peer, cid)
                    continue
                per_peer.setdefault(peer, []).append(cid)
        if not per_peer:
            return []

        sends = []
        for at, peer in schedule_spread(self.config.strategy, self.rng, list(per_peer), now):
            floor = at
            for cid in per_peer[peer]:
                w = self.ledger.clear(peer, cid)
                if w is not None:
                    floor = max(floor, w.at)
            entries = tuple(WantlistEntry(c, cancel=True) for c in per_peer[peer])
            sends.append(TimedSend(floor, peer, BitswapMessage(entries)))
        return sends

    # -- client side -------------------------------------------------------

    def want_content(self, cids: Sequence[Cid], now: float) -> list[TimedSend]:
        """Open a client session for ``cids`` and ask every neighbor for the missing ones."""
        wanted = list(dict.fromkeys(cids))
        if not wanted:
            raise ValueError("want_content needs at least one cid")
        session = ClientSession(len(self.client_sessions), set(wanted))
        session.received_cids = {c for c in wanted if c in self.blockstore}
        self.client_sessions.append(session)
        missing = [c for c in wanted if c not in self.blockstore]
        if not missing:
            return []
        self.relay_session.forwarded.update(missing)
        return self._spread_want_haves(missing, self.neighbors, now, self.config.hop_limit)

    def peer_connected(self, peer: PeerId, now: float) -> list[TimedSend]:
        """A new connection: send it our open wants right away."""
        self.add_neighbor(peer)
        missing = sorted(
            {c for s in self.client_sessions for c in s.wanted_cids - s.received_cids}
        )
        missing = [c for c in missing if c not in self.blockstore]
        fresh = [c for c in missing if self.ledger.record(peer, c, WantType.HAVE, now)]
        if not fresh:
            return []
        for c in fresh:
            self.relay_session.asked.setdefault(c, set()).add(peer)
        msg = BitswapMessage(
            tuple(WantlistEntry(c, WantType.HAVE, ttl=self.config.hop_limit) for c in fresh)
        )
        return [TimedSend(now, peer, msg)]

    # -- message handling --------------------------------------------------

    def handle_message(self, frm: PeerId, msg: BitswapMessage, now: float) -> list[TimedSend]:
        if frm not in self.neighbors:
            raise ProtocolError(f"{self.id} got a message from non-neighbor {frm}")
        out: list[TimedSend] = []
        for block in msg.blocks:
            out += self.handle_block(frm, block, now)
        for cid, presence in msg.presences:
            if presence is Presence.HAVE:
                out += self.handle_have(frm, cid, now)
            else:
                self.handle_dont_have(frm, cid)
        for entry in msg.entries:
            if entry.cancel:
                out += self.handle_cancel(frm, entry.cid, now)
            elif entry.want_type is WantType.HAVE:
                out += self.handle_want_have(frm, entry, now)
            else:
                out += self.handle_want_block(frm, entry, now)
        return coalesce(out)

    def handle_want_have(self, frm: PeerId, entry: WantlistEntry, now: float) -> list[TimedSend]:
        if entry.cancel or entry.want_type is not WantType.HAVE:
            raise ProtocolError(f"not a WANT-HAVE: {entry!r}")
        cid = entry.cid
        block = self.blockstore.get(cid)
        if block is not None:
            if block.size < self.config.small_block_threshold:
                return [TimedSend(now, frm, BitswapMessage(blocks=(block,)))]
            return [TimedSend(now, frm, BitswapMessage(presences=((cid, Presence.HAVE),)))]

        out = []
        if entry.send_dont_have:
            out.append(TimedSend(now, frm, BitswapMessage(presences=((cid, Presence.DONT_HAVE),))))
        if not self.config.forwarding or (entry.ttl is not None and entry.ttl <= 1):
            return out
        relay = self.relay_session
        first = cid not in relay.forwarded
        # A relay never searches again: once its upstream wants are gone it cannot serve.
        if not first and not self.ledger.has_any(cid) and not self.wants_for_self(cid):
            return out
        relay.add(cid, frm)
        if first:
            relay.forwarded.add(cid)
            targets = [p for p in self.neighbors if p not in relay.interests[cid]]
            ttl = None if entry.ttl is None else entry.ttl - 1
            out += self._spread_want_haves([cid], targets, now, ttl)
        return out

    def handle_want_block(self, frm: PeerId, entry: WantlistEntry, now: float) -> list[TimedSend]:
        block = self.blockstore.get(entry.cid)
        if block is not None:
            return [TimedSend(now, frm, BitswapMessage(blocks=(block,)))]
        if entry.send_dont_have:
            return [TimedSend(now, frm, BitswapMessage(presences=((entry.cid, Presence.DONT_HAVE),)))]
        return []

    def handle_block(self, frm: PeerId, block: Block, now: float) -> list[TimedSend]:
        cid = block.cid
        self.put_block(block)
        for s in self.client_sessions:
            if cid in s.wanted_cids:
                s.received_cids.add(cid)
                s.saw_provider = True
        out = []
        for peer in sorted(self.relay_session.interests.pop(cid, ())):
            if peer != frm:
                out.append(TimedSend(now, peer, BitswapMessage(blocks=(block,))))
        # the sender dropped our want when it sent the block
        self.ledger.clear(frm, cid)
        out += self._spread_cancels([cid], now, exclude=frm)
        return out

    def handle_have(self, frm: PeerId, cid: Cid, now: float) -> list[TimedSend]:
        for s in self.client_sessions:
            if cid in s.wanted_cids:
                s.saw_provider = True
        if not self._wants(cid) or cid in self.ledger.block_requests:
            return []
        self.ledger.record(frm, cid, WantType.BLOCK, now)
        entry = WantlistEntry(cid, WantType.BLOCK, send_dont_have=True)
        return [TimedSend(now, frm, BitswapMessage((entry,)))]

    def handle_dont_have(self, frm: PeerId, cid: Cid) -> None:
        for s in self.client_sessions:
            if cid in s.wanted_cids:
                s.dont_have_from.add(frm)

    def handle_cancel(self, frm: PeerId, cid: Cid, now: float) -> list[TimedSend]:
        peers = self.relay_session.interests.get(cid)
        if not peers or frm not in peers:
            return []
        self.relay_session.discard(cid, frm)
        if not self._wants(cid):
            return self._spread_cancels([cid], now)
        return []

    def session_sweep(self, now: float) -> list[TimedSend]:
        """Cancel outstanding wants whose cid is fulfilled or no longer wanted."""
        stale = [c for c in self.ledger.outstanding_cids() if not self._wants(c)]
        if not stale:
            return []
        return coalesce(self._spread_cancels(stale, now))

    # -- introspection -----------------------------------------------------

    def snapshot(self) -> dict:
        return {
            "id": self.id,
            "blocks": sorted(c.hex() for c in self.blockstore),
            "interests": {
                c.hex(): sorted(p) for c, p in sorted(self.relay_session.interests.items())
            },
            "forwarded": len(self.relay_session.forwarded),
            "outstanding_wants": self.ledger.pending,
            "sessions_complete": [s.complete for s in self.client_sessions],
        }


def coalesce(sends: list[TimedSend]) -> list[TimedSend]:
    """Merge sends sharing (time, peer) into one message, keeping first-seen order."""
    groups: dict[tuple[float, PeerId], list[BitswapMessage]] = {}
    for s in sends:
        groups.setdefault((s.at, s.to), []).append(s.message)
    return [
        TimedSend(at, to, msgs[0] if len(msgs) == 1 else merge_messages(msgs))
        for (at, to), msgs in groups.items()
    ]
