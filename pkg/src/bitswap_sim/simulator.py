"""Deterministic discrete-event driver for a network of :class:`NodeState` peers.

Links are FIFO with one uniform latency. Eavesdroppers only record what
they receive. Simultaneous events run in enqueue order.
"""

from __future__ import annotations

import heapq
import itertools
import json
import logging
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from bitswap_sim.cid import Block, Cid, chunk_content
from bitswap_sim.messages import BitswapMessage
from bitswap_sim.node import NodeConfig, NodeState, TimedSend
from bitswap_sim.topology import Role, Topology

log = logging.getLogger(__name__)

DEFAULT_MAX_TIME_MS = 60_000.0
DEFAULT_BLOCK_SIZE = 256 * 1024


class SimulationError(RuntimeError):
    """An internal invariant of the simulator was violated."""


class EventKind(int, Enum):
    DELIVER = 0
    SWEEP = 1
    LOOKUP = 2


@dataclass
class SimEvent:
    """Queue entry; ordered by ``(time, seq)`` through its heap key."""

    time: float
    seq: int
    kind: EventKind
    node: str
    frm: str | None = None
    message: BitswapMessage | None = None
    sent_at: float | None = None


@dataclass(frozen=True)
class Delivery:
    time: float
    sent_at: float
    frm: str
    to: str
    message: BitswapMessage


@dataclass
class Trace:
    roles: dict[str, Role]
    leech: str
    seed_node: str
    root_cid: Cid
    cids: list[Cid]
    latency: float
    deliveries: list[Delivery] = field(default_factory=list)
    snapshots: dict[str, dict] = field(default_factory=dict)
    first_want_at: float | None = None
    completed_at: float | None = None
    lookup_at: float | None = None
    file_ok: bool = False
    truncated: bool = False
    end_time: float = 0.0

    @property
    def complete(self) -> bool:
        return self.completed_at is not None and self.file_ok

    @property
    def ttf(self) -> float | None:
        if not self.complete or self.first_want_at is None:
            return None
        return self.completed_at - self.first_want_at

    @property
    def relay_drained(self) -> bool:
        return all(not snap["interests"] for snap in self.snapshots.values())

    def sent_by(self, node: str) -> list[Delivery]:
        return [d for d in self.deliveries if d.frm == node]

    def messages_total(self) -> int:
        return len(self.deliveries)

    def want_haves_total(self) -> int:
        return sum(len(d.message.want_haves()) for d in self.deliveries)

    def jsonl_records(self) -> Iterator[dict]:
        for d in self.deliveries:
            for kind, cid in d.message.items():
                yield {"time": d.time, "from": d.frm, "to": d.to, "kind": kind, "cid": cid.short(16)}

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.jsonl_records())

    def write_jsonl(self, path: str | Path) -> None:
        path = Path(path)
        try:
            path.write_text(self.to_jsonl())
        except OSError as exc:
            raise OSError(f"cannot write trace to {path}: {exc}") from exc


class Simulator:
    def __init__(
        self,
        topo: Topology,
        node_configs: NodeConfig | Mapping[str, NodeConfig],
        seed: int,
        max_time: float = DEFAULT_MAX_TIME_MS,
    ) -> None:
        topo.validate()
        self.topo = topo
        self.latency = topo.latency
        self.max_time = max_time
        self.links: set[frozenset[str]] = set(topo.edges)
        self.nodes: dict[str, NodeState] = {}
        for n in topo.honest:
            cfg = node_configs if isinstance(node_configs, NodeConfig) else node_configs[n]
            self.nodes[n] = NodeState(n, topo.neighbors(n), cfg, seed)
        self.eavesdroppers = set(topo.eavesdroppers)
        self.queue: list[tuple[float, int, SimEvent]] = []
        self._seq = itertools.count()
        self.now = 0.0
        self.pending_deliveries = 0
        self._last_on_link: dict[tuple[str, str], float] = {}
        self.deliveries: list[Delivery] = []

    def _push(self, time: float, kind: EventKind, node: str, **kw) -> None:
        seq = next(self._seq)
        heapq.heappush(self.queue, (time, seq, SimEvent(time, seq, kind, node, **kw)))

    def post(self, frm: str, sends: list[TimedSend]) -> None:
        """Turn a node's TimedSends into Deliver events one latency later."""
        for s in sends:
            if s.at < self.now:
                raise SimulationError(f"{frm} scheduled a send in the past ({s.at} < {self.now})")
            if frozenset((frm, s.to)) not in self.links:
                raise SimulationError(f"send over non-edge {frm}->{s.to}")
            self.pending_deliveries += 1
            self._push(s.at + self.latency, EventKind.DELIVER, s.to, frm=frm, message=s.message, sent_at=s.at)

    def connect(self, a: str, b: str) -> None:
        self.links.add(frozenset((a, b)))
        for x, y in ((a, b), (b, a)):
            if x in self.nodes:
                self.nodes[x].add_neighbor(y)

    def deliver(self, ev: SimEvent) -> list[TimedSend]:
        """Process one Deliver event; returns the target's follow-up sends."""
        self.pending_deliveries -= 1
        link = (ev.frm, ev.node)
        if self._last_on_link.get(link, float("-inf")) > ev.time:
            raise SimulationError(f"FIFO violated on {ev.frm}->{ev.node}")
        self._last_on_link[link] = ev.time
        self.deliveries.append(Delivery(ev.time, ev.sent_at, ev.frm, ev.node, ev.message))
        if ev.node in self.eavesdroppers:
            return []
        return self.nodes[ev.node].handle_message(ev.frm, ev.message, ev.time)

    def step(self, ev: SimEvent) -> None:
        if ev.time < self.now:
            raise SimulationError("event queue went backwards in time")
        self.now = ev.time
        if ev.kind is EventKind.DELIVER:
            self.post(ev.node, self.deliver(ev))
        elif ev.kind is EventKind.SWEEP:
            node = self.nodes[ev.node]
            self.post(ev.node, node.session_sweep(self.now))
            if self.pending_deliveries:
                self._push(self.now + node.config.sweep_interval, EventKind.SWEEP, ev.node)
            else:
                self._sweep_armed.discard(ev.node)
        else:
            self.on_lookup(ev)

    def on_lookup(self, ev: SimEvent) -> None:  # pragma: no cover - overridden
        raise SimulationError("provider lookup fired without a handler")

    def arm_sweeps(self) -> None:
        for n, node in self.nodes.items():
            if n not in self._sweep_armed:
                self._sweep_armed.add(n)
                self._push(self.now + node.config.sweep_interval, EventKind.SWEEP, n)

    def run(self) -> bool:
        """Run to quiescence; False when max_time cut the run short."""
        self._sweep_armed: set[str] = set()
        self.arm_sweeps()
        while True:
            while self.queue:
                if self.queue[0][0] > self.max_time:
                    return False
                self.step(heapq.heappop(self.queue)[2])
                self.after_step()
                if self.pending_deliveries and len(self._sweep_armed) < len(self.nodes):
                    self.arm_sweeps()
            # final sweep at quiescence: stop only when it has nothing to cancel
            sends = [(n, node.session_sweep(self.now)) for n, node in self.nodes.items()]
            if not any(s for _, s in sends):
                return True
            for n, s in sends:
                self.post(n, s)

    def after_step(self) -> None:
        pass


class FetchSimulation(Simulator):
    """One leech fetching one file from the seed, optionally with a modeled
    provider lookup when every honest neighbor answers DONT-HAVE."""

    def __init__(
        self,
        topo: Topology,
        node_configs: NodeConfig | Mapping[str, NodeConfig],
        blocks: list[Block],
        leech: str,
        seed: int,
        max_time: float = DEFAULT_MAX_TIME_MS,
        provider_lookup_delay: float | None = None,
    ) -> None:
        super().__init__(topo, node_configs, seed, max_time)
        seeds = [n for n in topo.honest if topo.roles[n] is Role.SEED]
        if len(seeds) != 1:
            raise ValueError(f"topology needs exactly one seed, found {seeds}")
        if leech not in self.nodes or leech == seeds[0]:
            raise ValueError(f"invalid leech {leech!r}")
        self.seed_node = seeds[0]
        self.leech = leech
        self.blocks = blocks
        self.provider_lookup_delay = provider_lookup_delay
        self.lookup_started = False
        self.lookup_at: float | None = None
        self.completed_at: float | None = None
        self.first_want_at: float | None = None
        for b in blocks:
            self.nodes[self.seed_node].put_block(b)

    @property
    def session(self):
        return self.nodes[self.leech].client_sessions[0]

    def start(self) -> None:
        sends = self.nodes[self.leech].want_content([b.cid for b in self.blocks], self.now)
        if sends:
            self.first_want_at = min(s.at for s in sends)
        self.post(self.leech, sends)

    def after_step(self) -> None:
        session = self.session
        if self.completed_at is None and session.complete:
            self.completed_at = self.now
        if (
            self.provider_lookup_delay is not None
            and not self.lookup_started
            and not session.complete
            and not session.saw_provider
        ):
            honest_nbrs = {p for p in self.topo.neighbors(self.leech) if p not in self.eavesdroppers}
            if honest_nbrs <= session.dont_have_from:
                self.lookup_started = True
                self._push(self.now + self.provider_lookup_delay, EventKind.LOOKUP, self.leech)

    def on_lookup(self, ev: SimEvent) -> None:
        self.lookup_at = self.now
        if self.session.complete:
            return
        self.connect(self.leech, self.seed_node)
        self.post(self.leech, self.nodes[self.leech].peer_connected(self.seed_node, self.now))

    def trace(self, truncated: bool) -> Trace:
        leech = self.nodes[self.leech]
        data = [leech.blockstore.get(b.cid) for b in self.blocks]
        file_ok = all(d is not None for d in data) and b"".join(d.data for d in data) == b"".join(
            b.data for b in self.blocks
        )
        return Trace(
            roles=dict(self.topo.roles),
            leech=self.leech,
            seed_node=self.seed_node,
            root_cid=self.blocks[0].cid,
            cids=[b.cid for b in self.blocks],
            latency=self.latency,
            deliveries=self.deliveries,
            snapshots={n: node.snapshot() for n, node in self.nodes.items()},
            first_want_at=self.first_want_at,
            completed_at=self.completed_at,
            lookup_at=self.lookup_at,
            file_ok=file_ok,
            truncated=truncated,
            end_time=self.now,
        )


def run_simulation(
    topo: Topology,
    node_configs: NodeConfig | Mapping[str, NodeConfig],
    file: bytes,
    leech: str,
    seed: int,
    max_time: float = DEFAULT_MAX_TIME_MS,
    block_size: int = DEFAULT_BLOCK_SIZE,
    provider_lookup_delay: float | None = None,
) -> Trace:
    """Let ``leech`` fetch ``file`` from the topology's seed node.

    The run stops at quiescence or at ``max_time``; an incomplete fetch is
    reported through ``Trace.complete``, never raised.
    """
    blocks = chunk_content(file, block_size)
    if not blocks:
        raise ValueError("file must not be empty")
    sim = FetchSimulation(topo, node_configs, blocks, leech, seed, max_time, provider_lookup_delay)
    sim.start()
    finished = sim.run()
    if not finished:
        log.warning("run truncated at %.0f ms with leech %s incomplete=%s", max_time, leech, sim.completed_at is None)
    return sim.trace(truncated=not finished)
