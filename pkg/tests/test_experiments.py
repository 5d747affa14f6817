import csv
import io
import json

import pytest

from bitswap_sim.experiments import (
    EVAL_RUNS,
    LeechPosition,
    Mode,
    ScenarioConfig,
    SweepGrid,
    baseline_fetch_model,
    run_scenario,
    simulate_run,
    summarize,
    sweep,
    write_results,
    write_sweep,
)
from bitswap_sim.spreading import Immediate, Trickle


def quick(**kw):
    base = dict(file_size=512, runs=4, seed=3)
    base.update(kw)
    return ScenarioConfig(**base)


@pytest.mark.parametrize("eav", [1, 7])
def test_run_counts_match_defaults(eav):
    cfg = quick(eavesdroppers=eav, runs=EVAL_RUNS[eav])
    results = run_scenario(cfg)
    assert len(results) == EVAL_RUNS[eav]
    assert [r.run_id for r in results] == list(range(EVAL_RUNS[eav]))
    assert all(r.ttf > 0 for r in results)


def test_zero_runs():
    assert run_scenario(quick(runs=0)) == []


def test_parallel_matches_serial():
    cfg = quick(runs=6, file_size=150 * 1024)
    assert run_scenario(cfg, parallel=2) == run_scenario(cfg)


def test_runs_are_isolated():
    cfg = quick(runs=5, strategy=Trickle(150))
    forward = [simulate_run(cfg, i)[0] for i in range(5)]
    backward = [simulate_run(cfg, i)[0] for i in reversed(range(5))]
    assert forward == list(reversed(backward))


def test_baseline_ignores_trickle_delay():
    plain = quick(mode=Mode.BASELINE, strategy=Immediate(), file_size=150 * 1024)
    slow = quick(mode=Mode.BASELINE, strategy=Trickle(300), file_size=150 * 1024)
    assert isinstance(slow.strategy, Immediate) and not slow.node_config().forwarding
    assert [r.ttf for r in run_scenario(plain)] == [r.ttf for r in run_scenario(slow)]


@pytest.mark.parametrize("rtts, latency, delay", [(1, 100, 200), (0, 100, 0), (3, 50, 300)])
def test_lookup_cost(rtts, latency, delay):
    cfg = quick(mode=Mode.BASELINE, dht_lookup_rtts=rtts, latency=latency)
    assert baseline_fetch_model(cfg) == delay
    assert cfg.provider_lookup_delay() == delay
    assert quick().provider_lookup_delay() is None


def test_baseline_center_timeline():
    # DONT-HAVE back at 2L, lookup to 4L, small block fetched by 6L
    r, trace = simulate_run(quick(mode=Mode.BASELINE, latency=100), 0)
    assert trace.lookup_at == 400 and r.ttf == 600


def test_config_round_trip():
    cfg = quick(strategy=Trickle(50, 2), leech=LeechPosition.EDGE, hop_limit=3)
    assert ScenarioConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


@pytest.mark.parametrize("field, value", [("latency", -1), ("runs", -1), ("file_size", 0), ("eavesdroppers", -2)])
def test_config_rejects(field, value):
    with pytest.raises(ValueError):
        quick(**{field: value})


def test_evaluation_grid_shape():
    cells = SweepGrid().cells(0)
    assert len(cells) == 21 * 3 * 3 * 2
    combo = [c for c in cells if c.eavesdroppers == 4 and c.leech is LeechPosition.EDGE and c.file_size == 512]
    assert len(combo) == 21
    assert {(c.latency, c.trickle_delay) for c in combo} == {(l, d) for l in (50, 100, 150) for d in range(0, 301, 50)}
    assert {c.runs for c in cells} == {50, 40, 30}
    assert len({c.seed for c in cells}) == len(cells)
    baseline = SweepGrid(modes=(Mode.BASELINE,)).cells(0)
    assert len(baseline) == 3 * 3 * 3 * 2 and all(c.trickle_delay == 0 for c in baseline)


def test_cell_seeds_depend_on_base_seed():
    assert [c.seed for c in SweepGrid().cells(1)] != [c.seed for c in SweepGrid().cells(2)]
    assert [c.seed for c in SweepGrid().cells(1)] == [c.seed for c in SweepGrid().cells(1)]


def test_empty_axis_rejected():
    with pytest.raises(ValueError):
        SweepGrid(latencies=()).cells(0)


def small_grid():
    return SweepGrid(latencies=(100,), delays=(0, 300), eavesdroppers=(1,), file_sizes=(512,), runs=5)


def test_sweep_summary_lookup():
    result = sweep(small_grid(), base_seed=4)
    assert len(result.summary) == 4
    row = result.lookup(latency=100, delay=300, eavesdroppers=1, leech="center")
    assert 0 <= row.accuracy <= 1 and row.runs == 5 and row.failed == 0
    assert result.lookup(delay=0, leech="center").accuracy == 1.0
    with pytest.raises(KeyError):
        result.lookup(latency=100)


def test_write_results(tmp_path):
    cfg = quick(runs=50, latency=100, strategy=Trickle(300))
    runs = run_scenario(cfg)
    summary = [summarize(cfg, runs)]
    paths = write_results(summary, [cfg], [runs], tmp_path / "a", base_seed=42)
    rows = list(csv.DictReader(open(paths["runs"])))
    assert len(rows) == 50
    srow = next(csv.DictReader(open(paths["summary"])))
    assert 0.0 <= float(srow["accuracy"]) <= 1.0
    assert json.load(open(paths["config"]))["cells"][0]["seed"] == 3
    again = write_results(summary, [cfg], [runs], tmp_path / "b", base_seed=42)
    for key in paths:
        assert paths[key].read_bytes() == again[key].read_bytes()


def test_same_seed_same_bytes(tmp_path):
    a = write_sweep(sweep(small_grid(), 9), tmp_path / "a")
    b = write_sweep(sweep(small_grid(), 9, parallel=2), tmp_path / "b")
    assert all(a[k].read_bytes() == b[k].read_bytes() for k in a)


def test_write_failure_mentions_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        write_results([], [], [], blocker / "sub")


def test_csv_quoting_round_trips():
    cfg = quick(runs=2)
    runs = run_scenario(cfg)
    from bitswap_sim.experiments import runs_csv

    rows = list(csv.reader(io.StringIO(runs_csv([cfg], [runs]))))
    assert len(rows) == 3 and len({len(r) for r in rows}) == 1
