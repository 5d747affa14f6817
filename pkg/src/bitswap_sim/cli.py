"""Command-line front end: ``run``, ``sweep``, ``topo`` and ``trace``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import re
import sys
from pathlib import Path

from bitswap_sim.adversary import Prediction, predictions_csv
from bitswap_sim.experiments import (
    EVAL_DELAYS,
    EVAL_EAVESDROPPERS,
    EVAL_FILE_SIZES,
    EVAL_LATENCIES,
    LeechPosition,
    Mode,
    ScenarioConfig,
    SweepGrid,
    default_parallelism,
    run_scenario,
    simulate_run,
    summarize,
    sweep,
    write_results,
    write_sweep,
)
from bitswap_sim.spreading import Diffusion, Immediate, Trickle
from bitswap_sim.topology import attach_eavesdroppers, figure1_topology

OUT_ENV = "BITSWAP_SIM_OUT"
DEFAULT_OUT = "results"

_SIZE_RE = re.compile(r"^\s*(\d+)\s*(B|KiB|MiB)?\s*$")
_UNITS = {None: 1, "B": 1, "KiB": 1024, "MiB": 1024 * 1024}


def parse_size(text: str) -> int:
    """``512``, ``512B``, ``150KiB`` or ``1MiB`` to bytes."""
    m = _SIZE_RE.match(text)
    if not m:
        raise argparse.ArgumentTypeError(f"invalid size {text!r} (use B, KiB or MiB)")
    value = int(m.group(1)) * _UNITS[m.group(2)]
    if value < 1:
        raise argparse.ArgumentTypeError("size must be at least 1 byte")
    return value


def format_size(n: int) -> str:
    for unit, factor in (("MiB", 1024 * 1024), ("KiB", 1024)):
        if n % factor == 0:
            return f"{n // factor}{unit}"
    return f"{n}B"


def _csv_of(conv):
    def parse(text: str) -> list:
        try:
            return [conv(t) for t in text.split(",") if t.strip()]
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc

    return parse


class _Explicit(argparse.Action):
    """Store the value and remember that the user passed the flag."""

    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        namespace.explicit = getattr(namespace, "explicit", set()) | {self.dest}


def _scenario_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("scenario")
    g.add_argument("--mode", choices=[m.value for m in Mode], default="forwarding", help="protocol variant")
    g.add_argument("--leech", choices=[p.value for p in LeechPosition], default="center",
                   help="leech position: center (n5) or edge (n0)")
    g.add_argument("--latency", type=float, default=100.0, help="link latency in ms")
    g.add_argument("--strategy", choices=["trickle", "diffusion", "immediate"], default="trickle",
                   action=_Explicit, help="spreading strategy in forwarding mode")
    g.add_argument("--trickle-delay", type=float, default=100.0, action=_Explicit,
                   help="delay between trickle rounds in ms")
    g.add_argument("--batch", type=int, default=1, help="peers per trickle round")
    g.add_argument("--diffusion-mean", type=float, default=100.0, help="mean diffusion delay in ms")
    g.add_argument("--eavesdroppers", type=int, default=1, help="number of eavesdropper nodes")
    g.add_argument("--file-size", type=parse_size, default=parse_size("150KiB"),
                   help="test file size (B, KiB or MiB suffix)")
    g.add_argument("--block-size", type=parse_size, default=parse_size("256KiB"), help="chunk size")
    g.add_argument("--dht-lookup-rtts", type=int, default=1,
                   help="round trips of the modeled provider lookup (baseline only)")
    g.add_argument("--hop-limit", type=int, default=None, help="WANT-HAVE hop limit; off when omitted")
    g.add_argument("--max-time", type=float, default=60_000.0, help="simulated time limit per run in ms")
    return p


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="base seed")
    p.add_argument("--out", type=Path, default=None,
                   help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    p.add_argument("--parallel", type=int, default=default_parallelism(),
                   help="maximum concurrent simulations")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return p


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="bitswap-sim",
        description="Simulate Bitswap with request forwarding and trickle spreading.",
        formatter_class=fmt,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    scenario, common = _scenario_flags(), _common_flags()

    run = sub.add_parser("run", parents=[scenario, common], formatter_class=fmt,
                         help="run one scenario for several runs")
    run.add_argument("--runs", type=int, default=50, help="number of runs")
    run.set_defaults(handler=cmd_run, subparser=run)

    sw = sub.add_parser("sweep", parents=[common], formatter_class=fmt, help="run a parameter grid")
    sw.add_argument("--latencies", type=_csv_of(float), default=list(EVAL_LATENCIES), help="ms, comma separated")
    sw.add_argument("--delays", type=_csv_of(float), default=list(EVAL_DELAYS), help="trickle delays in ms")
    sw.add_argument("--eavesdroppers", type=_csv_of(int), default=list(EVAL_EAVESDROPPERS),
                    help="eavesdropper counts")
    sw.add_argument("--file-sizes", type=_csv_of(parse_size), default=list(EVAL_FILE_SIZES),
                    help="file sizes (B, KiB or MiB suffix)")
    sw.add_argument("--leeches", type=_csv_of(LeechPosition), default=["center", "edge"], help="leech positions")
    sw.add_argument("--modes", type=_csv_of(Mode), default=["forwarding", "baseline"], help="protocol variants")
    sw.add_argument("--runs", type=int, default=None, help="runs per cell (default 50/40/30 for 1/4/7 eavesdroppers)")
    sw.add_argument("--batch", type=int, default=1, help="peers per trickle round")
    sw.add_argument("--dht-lookup-rtts", type=int, default=1, help="baseline provider lookup round trips")
    sw.set_defaults(handler=cmd_sweep, subparser=sw)

    topo = sub.add_parser("topo", formatter_class=fmt, help="inspect the evaluation topology")
    topo.add_argument("--check", action="store_true", help="validate and print node/edge counts")
    topo.add_argument("--eavesdroppers", type=int, default=0, help="attach this many eavesdroppers")
    topo.add_argument("--edges", type=Path, default=None, help="write the edge list to this file ('-' for stdout)")
    topo.set_defaults(handler=cmd_topo, subparser=topo)

    tr = sub.add_parser("trace", parents=[scenario, common], formatter_class=fmt,
                        help="dump the message trace of a single run as JSON lines")
    tr.add_argument("--run-index", type=int, default=0, help="which run of the scenario to trace")
    tr.set_defaults(handler=cmd_trace, subparser=tr)
    return parser


def _out_dir(args) -> Path:
    if args.out is not None:
        return args.out
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


def scenario_from_args(args, parser: argparse.ArgumentParser, runs: int) -> ScenarioConfig:
    explicit = getattr(args, "explicit", set())
    mode = Mode(args.mode)
    if mode is Mode.BASELINE:
        if "trickle_delay" in explicit and args.trickle_delay > 0:
            parser.error("--trickle-delay > 0 requires --mode forwarding")
        if "strategy" in explicit and args.strategy != "immediate":
            parser.error(f"--strategy {args.strategy} requires --mode forwarding")
        strategy = Immediate()
    elif args.strategy == "trickle":
        strategy = Trickle(args.trickle_delay, args.batch)
    elif args.strategy == "diffusion":
        strategy = Diffusion(args.diffusion_mean)
    else:
        strategy = Immediate()
    return ScenarioConfig(
        mode=mode,
        leech=LeechPosition(args.leech),
        latency=args.latency,
        strategy=strategy,
        eavesdroppers=args.eavesdroppers,
        file_size=args.file_size,
        runs=runs,
        seed=args.seed,
        dht_lookup_rtts=args.dht_lookup_rtts,
        block_size=args.block_size,
        max_time=args.max_time,
        hop_limit=args.hop_limit,
    )


def summary_line(s) -> str:
    ttf = "n/a" if s.ttf_mean is None else f"{s.ttf_mean:.1f}ms"
    acc = "n/a" if s.accuracy is None else f"{s.accuracy:.3f}"
    return (
        f"{s.mode} leech={s.leech} latency={s.latency:g}ms delay={s.delay:g}ms "
        f"eavesdroppers={s.eavesdroppers} size={format_size(s.file_size)} runs={s.runs} "
        f"failed={s.failed} ttf_mean={ttf} accuracy={acc}"
    )


def _check_positive(parser, **values) -> None:
    for name, v in values.items():
        if v is not None and v < 1:
            parser.error(f"--{name.replace('_', '-')} must be >= 1")


def cmd_run(args, parser) -> int:
    _check_positive(parser, runs=args.runs, batch=args.batch, parallel=args.parallel, hop_limit=args.hop_limit)
    if args.eavesdroppers < 0 or args.dht_lookup_rtts < 0 or args.latency < 0:
        parser.error("counts and latency must be non-negative")
    cfg = scenario_from_args(args, parser, args.runs)
    results = run_scenario(cfg, parallel=args.parallel)
    summary = summarize(cfg, results)
    write_results([summary], [cfg], [results], _out_dir(args), cfg.seed)
    print(summary_line(summary))
    return 0


def cmd_sweep(args, parser) -> int:
    _check_positive(parser, runs=args.runs, batch=args.batch, parallel=args.parallel)
    grid = SweepGrid(
        latencies=args.latencies,
        delays=args.delays,
        eavesdroppers=args.eavesdroppers,
        file_sizes=args.file_sizes,
        leeches=args.leeches,
        modes=args.modes,
        runs=args.runs,
        batch=args.batch,
        dht_lookup_rtts=args.dht_lookup_rtts,
    )
    try:
        grid.cells(args.seed)
    except ValueError as exc:
        parser.error(str(exc))
    result = sweep(grid, args.seed, parallel=args.parallel)
    write_sweep(result, _out_dir(args))
    for s in result.summary:
        print(summary_line(s))
    return 0


def cmd_topo(args, parser) -> int:
    if args.eavesdroppers < 0:
        parser.error("--eavesdroppers must be >= 0")
    topo = attach_eavesdroppers(figure1_topology(), args.eavesdroppers)
    if args.check:
        topo.validate()
        print(f"{len(topo.nodes)} nodes / {len(topo.edges)} edges")
    if args.edges is not None:
        if str(args.edges) == "-":
            sys.stdout.write(topo.edge_list())
        else:
            args.edges.write_text(topo.edge_list())
    if not args.check and args.edges is None:
        sys.stdout.write(topo.edge_list())
    return 0


def cmd_trace(args, parser) -> int:
    if args.run_index < 0:
        parser.error("--run-index must be >= 0")
    cfg = scenario_from_args(args, parser, args.run_index + 1)
    result, trace = simulate_run(cfg, args.run_index)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    trace.write_jsonl(out / "trace.jsonl")
    (out / "topology.txt").write_text(cfg.topology().edge_list())
    pred = Prediction(str(result.run_id), result.predicted, result.truth)
    (out / "predictions.csv").write_text(predictions_csv([pred]))
    ttf = "failed" if result.ttf is None else f"{result.ttf:g}ms"
    print(f"run {result.run_id}: ttf={ttf} predicted={result.predicted} messages={result.messages_total}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args, args.subparser)
    except (OSError, RuntimeError, ValueError) as exc:
        logging.getLogger("bitswap_sim").error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
