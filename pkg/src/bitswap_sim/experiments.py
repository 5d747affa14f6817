"""Scenario construction, parameter sweeps, aggregation and CSV/JSON output."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import random
import statistics
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path

from bitswap_sim.adversary import first_timestamp_estimate, observations_from_trace
from bitswap_sim.node import NodeConfig
from bitswap_sim.seeds import derive_seed
from bitswap_sim.simulator import DEFAULT_BLOCK_SIZE, DEFAULT_MAX_TIME_MS, Trace, run_simulation
from bitswap_sim.spreading import Diffusion, Immediate, SpreadingStrategy, Trickle
from bitswap_sim.topology import CENTER_LEECH, EDGE_LEECH, Topology, attach_eavesdroppers, figure1_topology

log = logging.getLogger(__name__)

KiB = 1024
MiB = 1024 * KiB

EVAL_LATENCIES = (50.0, 100.0, 150.0)
EVAL_DELAYS = tuple(float(d) for d in range(0, 301, 50))
EVAL_EAVESDROPPERS = (1, 4, 7)
EVAL_FILE_SIZES = (512, 150 * KiB, 1 * MiB)
EVAL_RUNS = {1: 50, 4: 40, 7: 30}


class Mode(str, Enum):
    BASELINE = "baseline"
    FORWARDING = "forwarding"


class LeechPosition(str, Enum):
    CENTER = "center"
    EDGE = "edge"

    @property
    def node(self) -> str:
        return CENTER_LEECH if self is LeechPosition.CENTER else EDGE_LEECH


def default_runs(eavesdroppers: int) -> int:
    return EVAL_RUNS.get(eavesdroppers, 50)


def strategy_to_dict(s: SpreadingStrategy) -> dict:
    return {"kind": type(s).__name__.lower(), **asdict(s)}


def strategy_from_dict(d: dict) -> SpreadingStrategy:
    d = dict(d)
    kind = d.pop("kind")
    return {"immediate": Immediate, "trickle": Trickle, "diffusion": Diffusion}[kind](**d)


@dataclass(frozen=True)
class ScenarioConfig:
    mode: Mode = Mode.FORWARDING
    leech: LeechPosition = LeechPosition.CENTER
    latency: float = 100.0
    strategy: SpreadingStrategy = field(default_factory=lambda: Trickle(100.0, 1))
    eavesdroppers: int = 1
    file_size: int = 150 * KiB
    runs: int = 50
    seed: int = 0
    dht_lookup_rtts: int = 1
    block_size: int = DEFAULT_BLOCK_SIZE
    max_time: float = DEFAULT_MAX_TIME_MS
    hop_limit: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "leech", LeechPosition(self.leech))
        # baseline is plain Bitswap: no forwarding, no obfuscation
        if self.mode is Mode.BASELINE and not isinstance(self.strategy, Immediate):
            object.__setattr__(self, "strategy", Immediate())
        if self.latency < 0:
            raise ValueError("latency must be >= 0")
        if self.eavesdroppers < 0:
            raise ValueError("eavesdropper count must be >= 0")
        if self.file_size < 1:
            raise ValueError("file_size must be >= 1 byte")
        if self.runs < 0:
            raise ValueError("runs must be >= 0")
        if self.dht_lookup_rtts < 0:
            raise ValueError("dht_lookup_rtts must be >= 0")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")

    @property
    def forwarding(self) -> bool:
        return self.mode is Mode.FORWARDING

    @property
    def trickle_delay(self) -> float:
        return self.strategy.delay if isinstance(self.strategy, Trickle) else 0.0

    def node_config(self) -> NodeConfig:
        return NodeConfig(strategy=self.strategy, forwarding=self.forwarding, hop_limit=self.hop_limit)

    def topology(self) -> Topology:
        return attach_eavesdroppers(figure1_topology(self.latency), self.eavesdroppers)

    def provider_lookup_delay(self) -> float | None:
        if self.forwarding:
            return None
        return baseline_fetch_model(self)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["leech"] = self.leech.value
        d["strategy"] = strategy_to_dict(self.strategy)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioConfig:
        d = dict(d)
        d["strategy"] = strategy_from_dict(d["strategy"])
        return cls(**d)


def baseline_fetch_model(cfg: ScenarioConfig) -> float:
    """Delay of the modeled DHT provider lookup for a baseline leech.

    The lookup starts once every honest neighbor has answered DONT-HAVE and
    costs ``dht_lookup_rtts`` round trips; afterwards the leech holds a direct
    link to the seed with the scenario latency.
    """
    if cfg.mode is not Mode.BASELINE:
        raise ValueError("provider lookup only applies to baseline mode")
    return cfg.dht_lookup_rtts * 2 * cfg.latency


@dataclass(frozen=True)
class RunResult:
    run_id: int
    seed: int
    ttf: float | None  # None: leech did not complete
    predicted: str | None  # None: estimator abstained
    truth: str
    messages_total: int
    want_haves_total: int
    relay_drained: bool

    @property
    def failed(self) -> bool:
        return self.ttf is None

    @property
    def correct(self) -> bool:
        return self.predicted is not None and self.predicted == self.truth


def _run_file(cfg: ScenarioConfig, run_seed: int) -> bytes:
    return random.Random(run_seed).randbytes(cfg.file_size)


def run_seed_for(cfg: ScenarioConfig, index: int) -> int:
    return derive_seed(cfg.seed, "run", index)


def simulate_run(cfg: ScenarioConfig, index: int) -> tuple[RunResult, Trace]:
    """Execute run ``index`` of ``cfg`` on freshly built nodes."""
    run_seed = run_seed_for(cfg, index)
    leech = cfg.leech.node
    trace = run_simulation(
        cfg.topology(),
        cfg.node_config(),
        _run_file(cfg, run_seed),
        leech,
        run_seed,
        max_time=cfg.max_time,
        block_size=cfg.block_size,
        provider_lookup_delay=cfg.provider_lookup_delay(),
    )
    predicted = None
    if cfg.eavesdroppers:
        predicted = first_timestamp_estimate(
            observations_from_trace(trace), trace.root_cid, derive_seed(run_seed, "tie")
        )
    if not trace.complete:
        log.warning("run %d (seed %d) failed to complete", index, run_seed)
    result = RunResult(
        run_id=index,
        seed=run_seed,
        ttf=trace.ttf,
        predicted=predicted,
        truth=leech,
        messages_total=trace.messages_total(),
        want_haves_total=trace.want_haves_total(),
        relay_drained=trace.relay_drained,
    )
    return result, trace


def _run_one(args: tuple[ScenarioConfig, int]) -> RunResult:
    return simulate_run(*args)[0]


def default_parallelism() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def run_scenario(cfg: ScenarioConfig, parallel: int = 1) -> list[RunResult]:
    """All ``cfg.runs`` runs, ordered by run index regardless of ``parallel``."""
    jobs = [(cfg, i) for i in range(cfg.runs)]
    if parallel <= 1 or len(jobs) <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * parallel))))


# -- sweeps -----------------------------------------------------------------


@dataclass(frozen=True)
class SweepGrid:
    latencies: Sequence[float] = EVAL_LATENCIES
    delays: Sequence[float] = EVAL_DELAYS
    eavesdroppers: Sequence[int] = EVAL_EAVESDROPPERS
    file_sizes: Sequence[int] = EVAL_FILE_SIZES
    leeches: Sequence[LeechPosition] = (LeechPosition.CENTER, LeechPosition.EDGE)
    modes: Sequence[Mode] = (Mode.FORWARDING,)
    runs: int | None = None  # None: 50/40/30 runs for 1/4/7 eavesdroppers
    batch: int = 1
    dht_lookup_rtts: int = 1
    block_size: int = DEFAULT_BLOCK_SIZE

    def cells(self, base_seed: int) -> list[ScenarioConfig]:
        if not all((self.latencies, self.delays, self.eavesdroppers, self.file_sizes, self.leeches, self.modes)):
            raise ValueError("sweep grid has an empty axis")
        out = []
        for mode in map(Mode, self.modes):
            # trickle delay is meaningless without forwarding
            delays = self.delays if mode is Mode.FORWARDING else (0.0,)
            for leech in map(LeechPosition, self.leeches):
                for eav in self.eavesdroppers:
                    for size in self.file_sizes:
                        for lat in self.latencies:
                            for delay in delays:
                                strategy = Trickle(float(delay), self.batch) if mode is Mode.FORWARDING else Immediate()
                                cell_seed = derive_seed(base_seed, mode.value, leech.value, float(lat), float(delay), eav, size)
                                out.append(
                                    ScenarioConfig(
                                        mode=mode,
                                        leech=leech,
                                        latency=float(lat),
                                        strategy=strategy,
                                        eavesdroppers=eav,
                                        file_size=size,
                                        runs=self.runs if self.runs is not None else default_runs(eav),
                                        seed=cell_seed,
                                        dht_lookup_rtts=self.dht_lookup_rtts,
                                        block_size=self.block_size,
                                    )
                                )
        return out


@dataclass(frozen=True)
class CellSummary:
    mode: str
    leech: str
    latency: float
    delay: float
    eavesdroppers: int
    file_size: int
    runs: int
    completed: int
    failed: int
    ttf_mean: float | None
    ttf_std: float | None
    accuracy: float | None


def summarize(cfg: ScenarioConfig, results: Sequence[RunResult]) -> CellSummary:
    ttfs = [r.ttf for r in results if r.ttf is not None]
    accuracy = None
    if results and cfg.eavesdroppers:
        accuracy = sum(r.correct for r in results) / len(results)
    return CellSummary(
        mode=cfg.mode.value,
        leech=cfg.leech.value,
        latency=cfg.latency,
        delay=cfg.trickle_delay,
        eavesdroppers=cfg.eavesdroppers,
        file_size=cfg.file_size,
        runs=len(results),
        completed=len(ttfs),
        failed=len(results) - len(ttfs),
        ttf_mean=statistics.fmean(ttfs) if ttfs else None,
        ttf_std=statistics.stdev(ttfs) if len(ttfs) > 1 else (0.0 if ttfs else None),
        accuracy=accuracy,
    )


@dataclass
class SweepResult:
    base_seed: int
    cells: list[ScenarioConfig]
    runs: list[list[RunResult]]
    summary: list[CellSummary]

    def lookup(self, **coords) -> CellSummary:
        """The single summary row matching all given field values."""
        rows = [s for s in self.summary if all(getattr(s, k) == v for k, v in coords.items())]
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} cells match {coords}")
        return rows[0]


def _run_cell(cfg: ScenarioConfig) -> list[RunResult]:
    return run_scenario(cfg)


def sweep(grid: SweepGrid, base_seed: int = 0, parallel: int = 1) -> SweepResult:
    """Run every grid cell; output order is the cell order whatever ``parallel`` is."""
    cells = grid.cells(base_seed)
    if parallel <= 1:
        runs = [_run_cell(c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            runs = list(pool.map(_run_cell, cells))
    summary = [summarize(c, r) for c, r in zip(cells, runs)]
    return SweepResult(base_seed, cells, runs, summary)


# -- persistence --------------------------------------------------------------

RUNS_HEADER = (
    "cell", "run_id", "seed", "mode", "leech", "latency_ms", "trickle_delay_ms", "eavesdroppers",
    "file_size", "ttf_ms", "failed", "predicted", "truth", "correct", "messages_total",
    "want_haves_total", "relay_drained",
)  # fmt: skip

SUMMARY_HEADER = (
    "cell", "mode", "leech", "latency_ms", "trickle_delay_ms", "eavesdroppers", "file_size",
    "runs", "completed", "failed", "ttf_mean_ms", "ttf_std_ms", "accuracy",
)  # fmt: skip


def _num(x: float | None) -> str:
    if x is None:
        return ""
    return f"{x:.6g}" if float(x) != int(x) else str(int(x))


def runs_csv(cells: Sequence[ScenarioConfig], runs: Sequence[Sequence[RunResult]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUNS_HEADER)
    for i, (cfg, results) in enumerate(zip(cells, runs)):
        for r in results:
            w.writerow((
                i, r.run_id, r.seed, cfg.mode.value, cfg.leech.value, _num(cfg.latency),
                _num(cfg.trickle_delay), cfg.eavesdroppers, cfg.file_size, _num(r.ttf),
                int(r.failed), r.predicted or "", r.truth, int(r.correct), r.messages_total,
                r.want_haves_total, int(r.relay_drained),
            ))  # fmt: skip
    return buf.getvalue()


def summary_csv(summary: Sequence[CellSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for i, s in enumerate(summary):
        w.writerow((
            i, s.mode, s.leech, _num(s.latency), _num(s.delay), s.eavesdroppers, s.file_size,
            s.runs, s.completed, s.failed, _num(s.ttf_mean), _num(s.ttf_std), _num(s.accuracy),
        ))  # fmt: skip
    return buf.getvalue()


def config_json(cells: Sequence[ScenarioConfig], base_seed: int | None = None) -> str:
    doc = {"base_seed": base_seed, "cells": [c.to_dict() for c in cells]}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_results(
    summary: Sequence[CellSummary],
    cells: Sequence[ScenarioConfig],
    runs: Sequence[Sequence[RunResult]],
    path: str | Path,
    base_seed: int | None = None,
) -> dict[str, Path]:
    """Write ``runs.csv``, ``summary.csv`` and ``config.json`` into directory ``path``."""
    out = Path(path)
    files = {
        "runs": (out / "runs.csv", runs_csv(cells, runs)),
        "summary": (out / "summary.csv", summary_csv(summary)),
        "config": (out / "config.json", config_json(cells, base_seed)),
    }
    try:
        out.mkdir(parents=True, exist_ok=True)
        for target, text in files.values():
            with open(target, "w", newline="") as fh:
                fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write results under {out}: {exc}") from exc
    return {k: p for k, (p, _) in files.items()}


def write_sweep(result: SweepResult, path: str | Path) -> dict[str, Path]:
    return write_results(result.summary, result.cells, result.runs, path, result.base_seed)


def iter_rows(result: SweepResult) -> Iterable[tuple[ScenarioConfig, RunResult]]:
    for cfg, rs in zip(result.cells, result.runs):
        for r in rs:
            yield cfg, r


def with_runs(cfg: ScenarioConfig, runs: int) -> ScenarioConfig:
    return replace(cfg, runs=runs)
