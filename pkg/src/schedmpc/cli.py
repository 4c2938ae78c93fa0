"""Command-line frontend.

Subcommands: ``synthesize`` (offline LMI synthesis -> certificate JSON),
``simulate`` (closed loop -> trace CSV), ``verify`` (re-check certificate
margins and optionally a trace), ``benchmark`` (solve-time table CSV) and
``plotdata`` (split a trace into per-signal CSVs for external plotting).

Exit codes: 0 success, 1 malformed configuration or input, 2 infeasibility,
3 certificate violation.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .benchmark import run_benchmark
from .config import load_certificate, load_config, save_certificate
from .errors import ConfigError, InfeasibleProblem, SchedMpcError, SdpInfeasible
from .mpc import (
    MpcConfig,
    MultiStepTbController,
    TimeVaryingActController,
    TimeVaryingTbController,
)
from .sim import ClosedLoopTrace, check_certificates, run_closed_loop
from .synthesis import params_fingerprint, synthesize_act, synthesize_tb

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_CERTIFICATE = 3


def _build_parser():
    ap = argparse.ArgumentParser(prog="schedmpc",
                                 description="Schedule/control co-design via MPC "
                                             "with periodic terminal ingredients")
    ap.add_argument("--seed", type=int, default=None,
                    help="seed for any randomized test-data generation")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synthesize", help="solve the terminal-ingredient LMIs")
    sp.add_argument("config")
    sp.add_argument("-o", "--output", required=True, help="certificate JSON path")

    sp = sub.add_parser("simulate", help="run the closed loop")
    sp.add_argument("config")
    sp.add_argument("--cert", required=True, help="certificate JSON from 'synthesize'")
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("-o", "--output", required=True, help="trace CSV path")

    sp = sub.add_parser("verify", help="re-check certificate margins (and a trace)")
    sp.add_argument("--cert", required=True)
    sp.add_argument("--trace", default=None)

    sp = sub.add_parser("benchmark", help="solve-time comparison table")
    sp.add_argument("config")
    sp.add_argument("--cert", default=None,
                    help="certificate JSON; synthesized from the config when omitted")
    sp.add_argument("--horizons", required=True,
                    help="comma-separated prediction horizons, e.g. 2,4,6,8,10,12")
    sp.add_argument("--repetitions", type=int, default=1)
    sp.add_argument("-o", "--output", required=True, help="table CSV path")

    sp = sub.add_parser("plotdata", help="emit per-signal CSV series from a trace")
    sp.add_argument("trace")
    sp.add_argument("-o", "--output", required=True, help="output directory")
    return ap


def _cmd_synthesize(args):
    setup = load_config(args.config)
    if setup.kind == "token_bucket":
        cert = synthesize_tb(setup.params, region_mode=setup.region_mode)
    else:
        cert = synthesize_act(setup.params)
    save_certificate(args.output, cert, setup.params)
    print(f"synthesis feasible; wrote {args.output}")
    print("decrease margins:", " ".join(f"{m:.3e}" for m in cert.margins))
    return EXIT_OK


def _controller(setup, ing):
    if setup.kind == "token_bucket":
        if setup.mpc.mode == "multi_step":
            return MultiStepTbController(setup.mpc, ing, setup.params)
        return TimeVaryingTbController(setup.mpc, ing, setup.params)
    return TimeVaryingActController(setup.mpc, ing, setup.params)


def _cmd_simulate(args):
    setup = load_config(args.config)
    cert, params = load_certificate(args.cert)
    if params_fingerprint(setup.params) != cert.params_hash:
        raise ConfigError("cert", "certificate was synthesized for a different model")
    controller = _controller(setup, cert.ingredients)
    trace = run_closed_loop(setup.params, controller, setup.x0, args.steps)
    trace.to_csv(args.output)
    print(f"simulated {trace.steps} steps; wrote {args.output}")
    return EXIT_OK


def _cmd_verify(args):
    cert, params = load_certificate(args.cert)
    print("offline decrease margins:", " ".join(f"{m:.3e}" for m in cert.margins))
    if not cert.passed:
        print("certificate FAILED: offline margins below tolerance")
        return EXIT_CERTIFICATE
    if args.trace:
        trace = ClosedLoopTrace.from_csv(args.trace)
        report = check_certificates(trace, cert.ingredients, params)
        print(f"descent ok: {report.descent_ok}; dissipation ok: {report.dissipation_ok}; "
              f"constraints ok: {report.constraints_ok}; terminal ok: {report.terminal_ok}")
        for msg in report.messages:
            print("  ", msg)
        if not report.passed:
            return EXIT_CERTIFICATE
    print("certificate OK")
    return EXIT_OK


def _cmd_benchmark(args):
    setup = load_config(args.config)
    if args.cert is None:
        if setup.kind != "token_bucket":
            raise ConfigError("network", "the benchmark protocol needs a token bucket model")
        cert = synthesize_tb(setup.params, region_mode=setup.region_mode)
    else:
        cert, _ = load_certificate(args.cert)
        if params_fingerprint(setup.params) != cert.params_hash:
            raise ConfigError("cert", "certificate was synthesized for a different model")
    horizons = [int(h) for h in args.horizons.split(",") if h]
    M = cert.ingredients.M
    configs = []
    for N in sorted(horizons):
        configs.append(replace(setup.mpc, horizon=N, mode="time_varying", warm_start=False))
        if N >= M:
            configs.append(replace(setup.mpc, horizon=N, mode="multi_step", warm_start=False))
    table = run_benchmark(setup.params, cert.ingredients, configs, setup.x0,
                          repetitions=args.repetitions)
    table.to_csv(args.output)
    for r in table.rows:
        rel = "" if r.relative is None else f" ({100.0 * r.relative:.1f}%)"
        val = "error: " + r.error if r.mean_seconds is None else f"{1000.0 * r.mean_seconds:.3f} ms{rel}"
        print(f"{r.mode:>13} N={r.horizon:<3} {val}")
    print(f"wrote {args.output}")
    return EXIT_OK


def _cmd_plotdata(args):
    trace_path = Path(args.trace)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(trace_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    for col, name in enumerate(header):
        if name == "k":
            continue
        out = outdir / f"{name}.csv"
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", name])
            for row in rows:
                if col < len(row) and row[col] != "":
                    w.writerow([row[0], row[col]])
    print(f"wrote per-signal series to {outdir}")
    return EXIT_OK


def main(argv=None):
    args = _build_parser().parse_args(argv)
    if args.seed is not None:
        np.random.seed(args.seed)
    try:
        if args.command == "synthesize":
            return _cmd_synthesize(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "benchmark":
            return _cmd_benchmark(args)
        if args.command == "plotdata":
            return _cmd_plotdata(args)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SdpInfeasible, InfeasibleProblem) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SchedMpcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
