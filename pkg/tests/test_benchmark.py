import csv

import numpy as np
import pytest
from dataclasses import replace

from schedmpc.benchmark import BenchmarkTable, run_benchmark
from schedmpc.models import TokenBucketState
from schedmpc.mpc import MpcConfig


@pytest.fixture(scope="module")
def bench_inputs(scalar_tb):
    p, cert = scalar_tb
    x0 = TokenBucketState(x_p=[1.5], u_s=[0.0], beta=4)
    return p, cert.ingredients, x0


def _cfg(N, mode="time_varying"):
    return MpcConfig(horizon=N, mode=mode, warm_start=False, schedule_search="enumerate")


class TestProtocol:
    def test_single_config_is_its_own_reference(self, bench_inputs):
        p, ing, x0 = bench_inputs
        table = run_benchmark(p, ing, [_cfg(3)], x0, repetitions=1)
        assert len(table.rows) == 1
        assert table.rows[0].relative == pytest.approx(1.0)

    def test_reference_row_is_tv_n8_when_present(self, bench_inputs):
        p, ing, x0 = bench_inputs
        table = run_benchmark(p, ing, [_cfg(2), _cfg(8)], x0, repetitions=1)
        ref = table.row("time_varying", 8)
        assert ref.relative == pytest.approx(1.0)

    def test_invalid_config_reported_not_fatal(self, bench_inputs):
        p, ing, x0 = bench_inputs
        # multi-step with N < M is a per-row config error
        table = run_benchmark(p, ing, [_cfg(1, mode="multi_step"), _cfg(2)], x0)
        bad = table.row("multi_step", 1)
        assert bad.mean_seconds is None and bad.error
        assert table.row("time_varying", 2).mean_seconds is not None

    def test_monotone_sanity_with_slack(self, bench_inputs):
        # mean solve time nondecreasing in N for a fixed mode, x1.5 slack
        p, ing, x0 = bench_inputs
        table = run_benchmark(p, ing, [_cfg(2), _cfg(4), _cfg(6)], x0, repetitions=5)
        t = [table.row("time_varying", N).mean_seconds for N in (2, 4, 6)]
        assert t[1] * 1.5 >= t[0]
        assert t[2] * 1.5 >= t[1]

    def test_multistep_times_the_initial_solve(self, bench_inputs):
        p, ing, x0 = bench_inputs
        table = run_benchmark(p, ing, [_cfg(2, mode="multi_step"), _cfg(2)], x0,
                              repetitions=2)
        assert table.row("multi_step", 2).mean_seconds is not None

    def test_csv_shape(self, bench_inputs, tmp_path):
        p, ing, x0 = bench_inputs
        table = run_benchmark(p, ing, [_cfg(2), _cfg(3)], x0)
        out = tmp_path / "table.csv"
        table.to_csv(out)
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["mode", "N", "mean_seconds", "relative_percent", "error"]
        assert len(rows) == 3
