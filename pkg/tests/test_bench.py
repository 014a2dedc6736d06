"""Benchmark harness: row shape, determinism, CSV format."""

from polyrdl.bench import (
    CSV_HEADER,
    BenchConfig,
    BenchRow,
    bench_run,
    run_row,
    write_csv,
    _gen_workload,
)


def test_ladder_cardinality(tmp_path):
    config = BenchConfig(op_counts=(50, 100), reps=1)
    rows = bench_run(config, isolate=False)
    assert len(rows) == 3 * 2  # types x op counts
    out = tmp_path / "bench.csv"
    write_csv(rows, str(out))
    lines = out.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 7


def test_csv_header_exact():
    assert CSV_HEADER == (
        "data_type,op_count,mean_op_latency_ns,sync_latency_ns,"
        "peak_rss_bytes,throughput_ops_s"
    )


def test_workload_seed_deterministic():
    w1 = _gen_workload("map", 500, seed=3, mix=(0.7, 0.2))
    w2 = _gen_workload("map", 500, seed=3, mix=(0.7, 0.2))
    assert w1 == w2
    w3 = _gen_workload("map", 500, seed=4, mix=(0.7, 0.2))
    assert w1 != w3


def test_row_op_totals_seed_deterministic():
    r1 = run_row("set", 300, seed=5)
    r2 = run_row("set", 300, seed=5)
    assert r1.op_count == r2.op_count == 300


def test_na_column_for_unavailable_sampler():
    row = BenchRow("counter", 10, 1.0, 1.0, -1, 10.0)
    assert ",NA," in row.csv()
