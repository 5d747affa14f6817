"""Source-obfuscation spreading strategies.

A strategy turns a list of target peers into per-peer send times. Only
WANT-HAVE requests and CANCELs go through a strategy; every other reply is
sent immediately.
"""

from __future__ import annotations

import random
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class Immediate:
    """Plain Bitswap: every target at once."""


@dataclass(frozen=True)
class Trickle:
    """Round-based spreading over a freshly permuted peer order.

    ``batch`` peers receive the message per round, rounds are ``delay`` ms apart.
    """

    delay: float = 100.0
    batch: int = 1

    def __post_init__(self) -> None:
        if self.delay < 0:
            raise ValueError("trickle delay must be >= 0")
        if self.batch < 1:
            raise ValueError("trickle batch must be >= 1")


@dataclass(frozen=True)
class Diffusion:
    """Independent exponential delay per target."""

    mean_delay: float = 100.0

    def __post_init__(self) -> None:
        if not self.mean_delay > 0:
            raise ValueError("diffusion mean delay must be > 0")


SpreadingStrategy = Union[Immediate, Trickle, Diffusion]


def schedule_spread(
    strategy: SpreadingStrategy,
    rng: random.Random,
    targets: Sequence[str],
    now: float,
) -> list[tuple[float, str]]:
    """Return ``(send_time, peer)`` pairs, one per target, in dispatch order."""
    if not targets:
        return []
    if isinstance(strategy, Immediate):
        return [(now, p) for p in targets]
    if isinstance(strategy, Trickle):
        order = list(targets)
        rng.shuffle(order)
        return [(now + (i // strategy.batch) * strategy.delay, p) for i, p in enumerate(order)]
    if isinstance(strategy, Diffusion):
        timed = [(now + rng.expovariate(1.0 / strategy.mean_delay), p) for p in targets]
        # stable on equal draws, which are measure-zero anyway
        return sorted(timed, key=lambda tp: tp[0])
    raise TypeError(f"unknown spreading strategy {strategy!r}")
