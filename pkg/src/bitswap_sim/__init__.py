"""Bitswap block exchange with request forwarding and trickle spreading,
driven by a deterministic discrete-event network simulator."""

from bitswap_sim.cid import Block, Cid, chunk_content, cid_of
from bitswap_sim.messages import (
    BitswapMessage,
    Presence,
    ProtocolError,
    WantlistEntry,
    WantType,
)
from bitswap_sim.node import NodeConfig, NodeState, TimedSend
from bitswap_sim.spreading import Diffusion, Immediate, Trickle, schedule_spread

__all__ = [
    "BitswapMessage",
    "Block",
    "Cid",
    "Diffusion",
    "Immediate",
    "NodeConfig",
    "NodeState",
    "Presence",
    "ProtocolError",
    "TimedSend",
    "Trickle",
    "WantType",
    "WantlistEntry",
    "chunk_content",
    "cid_of",
    "schedule_spread",
]

__version__ = "0.1.0"
