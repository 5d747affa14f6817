import pytest

from bitswap_sim.cid import Block
from bitswap_sim.node import NodeConfig, NodeState


@pytest.fixture
def small_block():
    return Block.from_data(b"x" * 512)


@pytest.fixture
def large_block():
    return Block.from_data(bytes(range(256)) * 1024)


def make_node(node_id="a", neighbors=("n0", "n1", "n2"), **cfg):
    return NodeState(node_id, list(neighbors), NodeConfig(**cfg), seed=1)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Collects one (criterion, passed, detail) line per acceptance check."""
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(lines, key=lambda x: int(x[0][2:])):
        terminalreporter.write_line(f"{name} {'PASS' if ok else 'FAIL'}  {detail}")
