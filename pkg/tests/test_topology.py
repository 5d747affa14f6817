import pytest

from bitswap_sim.topology import Role, attach_eavesdroppers, figure1_topology

EXPECTED_EDGES = {
    "n0n1", "n0n2", "n0n3", "n1n2", "n1n3", "n1n4", "n2n3", "n2n5", "n3n6", "n4n5", "n4n6",
    "n4n7", "n5n6", "n5n8", "n6n9", "n7n8", "n7n9", "n7s", "n8n9", "n8s", "n9s",
}  # fmt: skip


def bfs_hops(edges, src, dst):
    # reference breadth-first search on a plain adjacency dict
    adj = {}
    for a, b in edges:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    frontier, seen, depth = {src}, {src}, 0
    while frontier:
        if dst in frontier:
            return depth
        frontier = {v for u in frontier for v in adj[u]} - seen
        seen |= frontier
        depth += 1
    return None


def test_figure1_shape():
    topo = figure1_topology()
    assert len(topo.nodes) == 11
    assert {"".join(sorted(e, key=lambda n: (n == "s", n))) for e in topo.edges} == EXPECTED_EDGES
    assert topo.degree("s") == 3 and set(topo.neighbors("s")) == {"n7", "n8", "n9"}
    assert topo.roles["s"] is Role.SEED
    topo.validate()


def test_shortest_paths():
    topo = figure1_topology()
    pairs = [tuple(sorted(e)) for e in topo.edges]
    assert bfs_hops(pairs, "n0", "s") == 4 == topo.hops("n0", "s")
    assert bfs_hops(pairs, "n5", "s") == 2 == topo.hops("n5", "s")
    for n in topo.honest:
        assert topo.hops(n, "s") == bfs_hops(pairs, n, "s")


@pytest.mark.parametrize("k, nodes, edges", [(0, 11, 21), (1, 12, 32), (7, 18, 98)])
def test_attach_eavesdroppers(k, nodes, edges):
    base = figure1_topology()
    topo = attach_eavesdroppers(base, k)
    assert len(topo.nodes) == nodes and len(topo.edges) == edges
    assert base.edges <= topo.edges
    for e in topo.eavesdroppers:
        assert set(topo.neighbors(e)) == set(base.honest)
    topo.validate()
    assert topo.hops("n0", "s") == 4  # eavesdroppers are not routes


def test_negative_eavesdroppers():
    with pytest.raises(ValueError):
        attach_eavesdroppers(figure1_topology(), -1)


def test_edge_list_format():
    lines = figure1_topology().edge_list().splitlines()
    assert len(lines) == 21
    assert lines[0] == "n0 n1" and lines[-1] == "n9 s"


def test_validate_rejects_disconnected():
    topo = figure1_topology()
    broken = type(topo)(topo.roles, frozenset(e for e in topo.edges if "s" not in e), topo.latency)
    with pytest.raises(ValueError):
        broken.validate()
