"""Co-design of transmission schedules and control inputs via MPC with
M-periodic terminal ingredients: offline LMI synthesis of terminal costs and
regions, an online mixed-integer receding-horizon solver, a closed-loop
simulator with convergence certificates, and a benchmark harness."""

from .benchmark import BenchmarkTable, run_benchmark
from .config import load_certificate, load_config, save_certificate
from .models import (
    ActuatorParams,
    PeriodicTerminalIngredients,
    TokenBucketInput,
    TokenBucketParams,
    TokenBucketState,
)
from .mpc import (
    MpcConfig,
    MpcSolution,
    MultiStepTbController,
    SchedulePlan,
    TimeVaryingActController,
    TimeVaryingTbController,
    solve_tv_mpc_act,
    solve_tv_mpc_tb,
)
from .polytope import PeriodicPolytopeFamily, Polytope
from .sim import ClosedLoopTrace, check_certificates, run_closed_loop
from .synthesis import SynthesisCertificate, synthesize_act, synthesize_tb

__version__ = "0.1.0"

__all__ = [
    "ActuatorParams",
    "BenchmarkTable",
    "ClosedLoopTrace",
    "MpcConfig",
    "MpcSolution",
    "MultiStepTbController",
    "PeriodicPolytopeFamily",
    "PeriodicTerminalIngredients",
    "Polytope",
    "SchedulePlan",
    "SynthesisCertificate",
    "TimeVaryingActController",
    "TimeVaryingTbController",
    "TokenBucketInput",
    "TokenBucketParams",
    "TokenBucketState",
    "check_certificates",
    "load_certificate",
    "load_config",
    "run_benchmark",
    "run_closed_loop",
    "save_certificate",
    "solve_tv_mpc_act",
    "solve_tv_mpc_tb",
    "synthesize_act",
    "synthesize_tb",
]
