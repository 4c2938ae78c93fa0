"""Solve-time benchmark comparing the time-varying scheme with the multi-step
baseline.

Protocol: multi-step rows time the solve at k = 0 only; time-varying rows
average over the first M closed-loop solves with warm starting forced off so
the comparison is fair.  The relative column is normalized to the
(time_varying, N=8) row when present.  Absolute times are machine-specific;
only the relative trend is meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import SchedMpcError
from .mpc import solve_multistep_mpc_tb, solve_tv_mpc_tb, tb_applied_input
from .models import TokenBucketParams, tb_step


@dataclass(eq=False)
class BenchmarkRow:
    mode: str
    horizon: int
    mean_seconds: float | None
    relative: float | None = None
    error: str | None = None


@dataclass(eq=False)
class BenchmarkTable:
    rows: tuple

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mode", "N", "mean_seconds", "relative_percent", "error"])
            for r in self.rows:
                w.writerow([
                    r.mode, r.horizon,
                    "" if r.mean_seconds is None else f"{r.mean_seconds:.17g}",
                    "" if r.relative is None else f"{100.0 * r.relative:.17g}",
                    r.error or "",
                ])

    def row(self, mode, horizon):
        for r in self.rows:
            if r.mode == mode and r.horizon == horizon:
                return r
        return None


def _time_multistep(p, ing, cfg, x0, repetitions):
    times = []
    for _ in range(repetitions):
        sol = solve_multistep_mpc_tb(x0, 0, cfg, ing, p)
        times.append(sol.solve_seconds)
    return float(np.mean(times))


def _time_time_varying(p, ing, cfg, x0, repetitions):
    cfg = replace(cfg, warm_start=False)
    times = []
    for _ in range(repetitions):
        s = x0
        prev = None
        for k in range(ing.M):
            sol = solve_tv_mpc_tb(s, k, cfg, ing, p, prev_plan=prev)
            times.append(sol.solve_seconds)
            prev = sol.plan
            s = tb_step(s, tb_applied_input(sol.plan, p), p)
    return float(np.mean(times))


def run_benchmark(model, ing, configs, x0, repetitions=1) -> BenchmarkTable:
    """Time every config under the stated protocol; per-row errors are recorded,
    not fatal."""
    if not isinstance(model, TokenBucketParams):
        raise SchedMpcError("the benchmark protocol is defined for the token bucket setup")
    rows = []
    for cfg in configs:
        try:
            cfg.validate_for(ing.M)
            if cfg.mode == "multi_step":
                mean = _time_multistep(model, ing, cfg, x0, repetitions)
            else:
                mean = _time_time_varying(model, ing, cfg, x0, repetitions)
            rows.append(BenchmarkRow(mode=cfg.mode, horizon=cfg.horizon, mean_seconds=mean))
        except SchedMpcError as exc:
            rows.append(BenchmarkRow(mode=cfg.mode, horizon=cfg.horizon,
                                     mean_seconds=None, error=str(exc)))

    reference = None
    for r in rows:
        if r.mode == "time_varying" and r.horizon == 8 and r.mean_seconds is not None:
            reference = r
            break
    if reference is None:
        tv = [r for r in rows if r.mode == "time_varying" and r.mean_seconds is not None]
        if tv:
            reference = max(tv, key=lambda r: r.horizon)
        else:
            ok = [r for r in rows if r.mean_seconds is not None]
            reference = ok[0] if ok else None
    if reference is not None:
        for r in rows:
            if r.mean_seconds is not None:
                r.relative = r.mean_seconds / reference.mean_seconds
    return BenchmarkTable(rows=tuple(rows))
