"""Static overlay topologies: the 11-peer evaluation graph plus eavesdroppers."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum


class Role(str, Enum):
    SEED = "seed"
    LEECH = "leech"
    FORWARDER = "forwarder"
    EAVESDROPPER = "eavesdropper"


SEED_ID = "s"
CENTER_LEECH = "n5"
EDGE_LEECH = "n0"

FIGURE1_EDGES = (
    ("n0", "n1"), ("n0", "n2"), ("n0", "n3"),
    ("n1", "n2"), ("n1", "n3"), ("n1", "n4"),
    ("n2", "n3"), ("n2", "n5"),
    ("n3", "n6"),
    ("n4", "n5"), ("n4", "n6"), ("n4", "n7"),
    ("n5", "n6"), ("n5", "n8"),
    ("n6", "n9"),
    ("n7", "n8"), ("n7", "n9"), ("n7", "s"),
    ("n8", "n9"), ("n8", "s"),
    ("n9", "s"),
)  # fmt: skip


def _edge(a: str, b: str) -> frozenset[str]:
    if a == b:
        raise ValueError(f"self-loop at {a}")
    return frozenset((a, b))


@dataclass(frozen=True)
class Topology:
    """Undirected graph with node roles and one latency for every link (ms)."""

    roles: dict[str, Role]
    edges: frozenset[frozenset[str]]
    latency: float = 100.0
    _adj: dict[str, tuple[str, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        adj: dict[str, list[str]] = {n: [] for n in self.roles}
        for e in self.edges:
            a, b = sorted(e)
            if a not in adj or b not in adj:
                raise ValueError(f"edge {a}-{b} references an unknown node")
            adj[a].append(b)
            adj[b].append(a)
        object.__setattr__(self, "_adj", {n: tuple(sorted(v, key=node_sort_key)) for n, v in adj.items()})

    @property
    def nodes(self) -> list[str]:
        return sorted(self.roles, key=node_sort_key)

    @property
    def honest(self) -> list[str]:
        return [n for n in self.nodes if self.roles[n] is not Role.EAVESDROPPER]

    @property
    def eavesdroppers(self) -> list[str]:
        return [n for n in self.nodes if self.roles[n] is Role.EAVESDROPPER]

    def neighbors(self, node: str) -> tuple[str, ...]:
        return self._adj[node]

    def degree(self, node: str) -> int:
        return len(self._adj[node])

    def has_edge(self, a: str, b: str) -> bool:
        return frozenset((a, b)) in self.edges

    def with_roles(self, **roles: Role) -> Topology:
        new = dict(self.roles)
        for node, role in roles.items():
            if node not in new:
                raise KeyError(node)
            new[node] = role
        return replace(self, roles=new)

    def with_latency(self, latency: float) -> Topology:
        if latency < 0:
            raise ValueError("latency must be >= 0")
        return replace(self, latency=latency)

    def hops(self, src: str, dst: str, honest_only: bool = True) -> int | None:
        """Breadth-first hop count, or None when unreachable."""
        allowed = set(self.honest) if honest_only else set(self.roles)
        seen = {src: 0}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            if u == dst:
                return seen[u]
            for v in self._adj[u]:
                if v in allowed and v not in seen:
                    seen[v] = seen[u] + 1
                    queue.append(v)
        return None

    def validate(self) -> None:
        honest = self.honest
        if honest and any(self.hops(honest[0], n) is None for n in honest):
            raise ValueError("honest subgraph is not connected")
        for e in self.eavesdroppers:
            adj = set(self._adj[e])
            if adj != set(honest):
                raise ValueError(f"eavesdropper {e} must link to every honest node and nothing else")

    def edge_list(self) -> str:
        """One ``a b`` pair per line, sorted; readable by common graph tools."""
        pairs = sorted((tuple(sorted(e, key=node_sort_key)) for e in self.edges), key=_pair_key)
        return "".join(f"{a} {b}\n" for a, b in pairs)


def node_sort_key(node: str) -> tuple[int, int, str]:
    # n0 < n1 < ... < n10 < s < e0 < e1 ...
    group = {"n": 0, "s": 1, "e": 2}.get(node[:1], 3)
    digits = node[1:]
    return (group, int(digits) if digits.isdigit() else -1, node)


def _pair_key(pair: tuple[str, str]) -> tuple:
    return (node_sort_key(pair[0]), node_sort_key(pair[1]))


def figure1_topology(latency: float = 100.0) -> Topology:
    """Ten forwarders n0..n9 and the seed s, 21 links."""
    roles = {f"n{i}": Role.FORWARDER for i in range(10)}
    roles[SEED_ID] = Role.SEED
    return Topology(roles, frozenset(_edge(a, b) for a, b in FIGURE1_EDGES), latency)


def attach_eavesdroppers(topo: Topology, k: int) -> Topology:
    """Add ``k`` eavesdroppers ``e0..e{k-1}``, each linked to every honest node."""
    if k < 0:
        raise ValueError("eavesdropper count must be >= 0")
    if k == 0:
        return topo
    honest = topo.honest
    start = len(topo.eavesdroppers)
    roles = dict(topo.roles)
    edges = set(topo.edges)
    for i in range(start, start + k):
        e = f"e{i}"
        roles[e] = Role.EAVESDROPPER
        edges.update(_edge(e, h) for h in honest)
    return replace(topo, roles=roles, edges=frozenset(edges))
