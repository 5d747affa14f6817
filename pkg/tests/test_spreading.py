import math
import random
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import chisquare

from bitswap_sim.spreading import Diffusion, Immediate, Trickle, schedule_spread

PEERS = [f"n{i}" for i in range(5)]


def offsets(strategy, targets, now=1000.0, seed=0):
    return sorted(at - now for at, _ in schedule_spread(strategy, random.Random(seed), targets, now))


def test_immediate_sends_everything_now():
    assert offsets(Immediate(), PEERS) == [0] * 5


@pytest.mark.parametrize(
    "strategy, n, expected",
    [
        (Trickle(100, 1), 3, [0, 100, 200]),
        (Trickle(0, 1), 4, [0, 0, 0, 0]),
        (Trickle(50, 2), 5, [0, 0, 50, 50, 100]),
    ],
)
def test_trickle_round_arithmetic(strategy, n, expected):
    assert offsets(strategy, PEERS[:n]) == expected


def test_empty_targets():
    assert schedule_spread(Trickle(100), random.Random(0), [], 0.0) == []


@pytest.mark.parametrize("bad", [lambda: Trickle(-1), lambda: Trickle(10, 0), lambda: Diffusion(0)])
def test_invalid_parameters(bad):
    with pytest.raises(ValueError):
        bad()


@given(
    n=st.integers(0, 12),
    delay=st.sampled_from([0.0, 25.0, 100.0, 300.0]),
    batch=st.integers(1, 4),
    seed=st.integers(0, 2**32),
)
def test_trickle_coverage_and_max_offset(n, delay, batch, seed):
    targets = [f"p{i}" for i in range(n)]
    sched = schedule_spread(Trickle(delay, batch), random.Random(seed), targets, 0.0)
    assert sorted(p for _, p in sched) == sorted(targets)
    if n:
        assert max(at for at, _ in sched) == (math.ceil(n / batch) - 1) * delay


def test_trickle_first_slot_is_uniform():
    # chi-square goodness of fit, 2000 independent permutations
    rng = random.Random(12345)
    firsts = Counter(schedule_spread(Trickle(100), rng, PEERS, 0.0)[0][1] for _ in range(2000))
    _, p = chisquare([firsts[p] for p in PEERS])
    assert p > 0.01


def test_diffusion_draws_are_exponential():
    rng = random.Random(7)
    draws = [at for _ in range(4000) for at, _ in schedule_spread(Diffusion(80.0), rng, ["a"], 0.0)]
    mean = sum(draws) / len(draws)
    # mean of 4000 exp draws: sd = 80/sqrt(4000) ~ 1.3
    assert abs(mean - 80.0) < 5.0
    assert min(draws) >= 0.0


def test_diffusion_covers_every_target_once():
    sched = schedule_spread(Diffusion(50.0), random.Random(3), PEERS, 10.0)
    assert sorted(p for _, p in sched) == PEERS
    assert [at for at, _ in sched] == sorted(at for at, _ in sched)
    assert all(at >= 10.0 for at, _ in sched)
