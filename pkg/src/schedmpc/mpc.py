"""Online receding-horizon co-design of schedules and control inputs.

Per time step the integer schedule is optimized jointly with the continuous
inputs: every bucket-feasible transmission pattern (or actuator sequence)
induces one convex subproblem, solved exactly, and the best plan wins with a
lexicographic tie rule so runs are reproducible.  Searches run either as full
enumeration or depth-first branch-and-bound whose node bound is the exact
optimum of the prefix stage costs (a relaxation, since future stage and
terminal costs are nonnegative).
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, replace

import numpy as np

from .errors import InfeasibleProblem, InvalidModel
from .models import (
    ActuatorParams,
    EllipsoidRegions,
    PeriodicTerminalIngredients,
    PolytopicRegions,
    TokenBucketInput,
    TokenBucketParams,
    TokenBucketState,
    UnboundedRegions,
    act_pi,
    tb_stage_cost,
)
from .numerics import QuadraticProgram, as_vector, solve_qp, symmetrize

FEAS_TOL = 1e-9


def phase_index(j0, k, M):
    """Terminal ingredient index used in the problem solved at time k."""
    return (j0 + k) % M


@dataclass(eq=False)
class MpcConfig:
    """Knobs of the online problem; defaults reproduce the reference scheme."""

    horizon: int
    mode: str = "time_varying"  # | multi_step
    j0: int = 0
    warm_start: bool = True
    schedule_search: str = "enumerate"  # | branch_and_bound
    tie_tolerance: float = 1e-9

    def __post_init__(self):
        if self.horizon < 1:
            raise InvalidModel("prediction horizon must be >= 1")
        if self.mode not in ("time_varying", "multi_step"):
            raise InvalidModel(f"unknown MPC mode {self.mode!r}")
        if self.schedule_search not in ("enumerate", "branch_and_bound"):
            raise InvalidModel(f"unknown schedule search {self.schedule_search!r}")
        if self.tie_tolerance < 0:
            raise InvalidModel("tie tolerance must be nonnegative")

    def validate_for(self, M):
        if not 0 <= self.j0 < M:
            raise InvalidModel(f"initial phase {self.j0} outside [0, {M - 1}]")
        if self.mode == "multi_step" and self.horizon < M:
            raise InvalidModel(f"multi-step mode needs horizon >= M = {M}")


@dataclass(eq=False)
class SchedulePlan:
    """One fixed integer schedule with the optimum of its convex subproblem."""

    schedule: tuple
    feasible: bool
    value: float | None = None
    inputs: tuple = ()        # per-step input vectors (token bucket: transmitted u_c or None)
    states: np.ndarray | None = None   # predicted plant states, (N+1) x n_p
    held: np.ndarray | None = None     # predicted held inputs, (N+1) x m_p (token bucket)
    levels: tuple | None = None        # predicted bucket levels (token bucket)


@dataclass(eq=False)
class MpcSolution:
    """Winner of one online solve plus bookkeeping for traces and benchmarks."""

    plan: SchedulePlan
    value: float
    solve_seconds: float
    explored: int
    tie_count: int = 1  # plans whose value sits within tie_tolerance of the optimum

    @property
    def schedule(self):
        return self.plan.schedule


def _better(value, schedule, best_value, best_schedule, tol):
    """Tie rule: strictly smaller value wins; near-ties go to the lexicographically smaller schedule."""
    if value < best_value - tol:
        return True
    return value <= best_value + tol and schedule < best_schedule


# ---------------------------------------------------------------------------
# Token bucket: schedule feasibility
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class BucketTrajectory:
    levels: tuple | None
    infeasible_at: int | None = None

    @property
    def feasible(self):
        return self.infeasible_at is None


def bucket_trajectory(beta0, gammas, p: TokenBucketParams) -> BucketTrajectory:
    """Exact integer bucket recursion; infeasible at the first overdrawn transmission."""
    beta = int(beta0)
    if not 0 <= beta <= p.b:
        raise InvalidModel(f"initial bucket level {beta} outside [0, {p.b}]")
    levels = [beta]
    for i, gamma in enumerate(gammas):
        if gamma not in (0, 1):
            raise InvalidModel("schedule entries must be 0 or 1")
        if gamma == 1 and not p.tx_feasible(beta):
            return BucketTrajectory(levels=None, infeasible_at=i)
        beta = min(beta + p.g - gamma * p.c, p.b)
        levels.append(beta)
    return BucketTrajectory(levels=tuple(levels))


def feasible_schedules_tb(beta0, N, p: TokenBucketParams):
    """Yield every bucket-feasible transmission pattern in lexicographic order."""
    if N < 1:
        raise InvalidModel("horizon must be >= 1")

    def rec(prefix, beta):
        if len(prefix) == N:
            yield tuple(prefix)
            return
        prefix.append(0)
        yield from rec(prefix, min(beta + p.g, p.b))
        prefix.pop()
        if p.tx_feasible(beta):
            prefix.append(1)
            yield from rec(prefix, min(beta + p.g - p.c, p.b))
            prefix.pop()

    yield from rec([], int(beta0))


# ---------------------------------------------------------------------------
# Token bucket: fixed-schedule subproblem
# ---------------------------------------------------------------------------

def _tb_state_feasible(s: TokenBucketState, p: TokenBucketParams, tol=FEAS_TOL):
    return (p.X_p.contains(s.x_p, tol=tol) and p.U_p.contains(s.u_s, tol=tol)
            and 0 <= s.beta <= p.b)


def _tb_condense(s: TokenBucketState, gammas, p: TokenBucketParams):
    """Prediction matrices of the schedule-condensed subproblem.

    Decision vector stacks the transmitted inputs only; the effective plant
    input at step i equals the held input after step i, which is affine in
    the decisions.  Returns (tx_steps, W, wbar, X, xbar) where W[i] theta +
    wbar[i] is the effective input at step i and X[i] theta + xbar[i] the
    plant state.
    """
    N = len(gammas)
    m_p, n_p = p.m_p, p.n_p
    tx_steps = [i for i, g in enumerate(gammas) if g == 1]
    nvar = m_p * len(tx_steps)
    W, wbar = [], []
    X = [np.zeros((n_p, nvar))]
    xbar = [s.x_p.copy()]
    W_cur = np.zeros((m_p, nvar))
    wbar_cur = s.u_s.copy()
    for i in range(N):
        if gammas[i] == 1:
            t = tx_steps.index(i)
            W_cur = np.zeros((m_p, nvar))
            W_cur[:, t * m_p:(t + 1) * m_p] = np.eye(m_p)
            wbar_cur = np.zeros(m_p)
        W.append(W_cur)
        wbar.append(wbar_cur)
        X.append(p.A @ X[i] + p.B @ W_cur)
        xbar.append(p.A @ xbar[i] + p.B @ wbar_cur)
    return tx_steps, W, wbar, X, xbar


def _accumulate_quadratic(H, f, c0, V, vbar, M):
    """Add (V theta + vbar)' M (V theta + vbar) to the quadratic form."""
    MV = M @ V
    H += 2.0 * V.T @ MV
    f += 2.0 * MV.T @ vbar
    c0 += float(vbar @ M @ vbar)
    return H, f, c0


def solve_fixed_schedule_tb(s: TokenBucketState, gammas, k, cfg: MpcConfig,
                            ing: PeriodicTerminalIngredients, p: TokenBucketParams,
                            phase=None, terminal=True) -> SchedulePlan:
    """Exact optimum of the convex subproblem for one transmission pattern.

    The terminal branch is decided by the (deterministic) predicted bucket
    level: at or above the phase threshold the plan must end inside Z_phase,
    below it the plant state and held input must land exactly on the origin.
    With ``terminal`` false the subproblem drops both terminal cost and
    terminal constraint (used for branch-and-bound prefix bounds).
    """
    gammas = tuple(int(g) for g in gammas)
    N = len(gammas)
    bucket = bucket_trajectory(s.beta, gammas, p)
    if not bucket.feasible:
        raise InvalidModel(f"schedule is not bucket-feasible (step {bucket.infeasible_at})")
    if phase is None:
        phase = phase_index(cfg.j0, k, ing.M)

    if not _tb_state_feasible(s, p):
        return SchedulePlan(schedule=gammas, feasible=False, levels=bucket.levels)

    tx_steps, W, wbar, X, xbar = _tb_condense(s, gammas, p)
    nvar = p.m_p * len(tx_steps)

    H = np.zeros((nvar, nvar))
    f = np.zeros(nvar)
    c0 = 0.0
    for i in range(N):
        H, f, c0 = _accumulate_quadratic(H, f, c0, X[i], xbar[i], p.Q)
        H, f, c0 = _accumulate_quadratic(H, f, c0, W[i], wbar[i], p.R)
    # Terminal pair (x_p(N), u_s(N)); u_s(N) equals the effective input of the last step.
    Z_N = np.vstack([X[N], W[N - 1]])
    zbar_N = np.concatenate([xbar[N], wbar[N - 1]])
    if terminal:
        H, f, c0 = _accumulate_quadratic(H, f, c0, Z_N, zbar_N, ing.P(phase))

    G_rows, h_rows = [], []
    A_eq, b_eq = None, None
    quad_rows = ()
    for i in range(1, N):
        G_rows.append(p.X_p.rows @ X[i])
        h_rows.append(np.ones(p.X_p.nrows) - p.X_p.rows @ xbar[i])
    for t in range(len(tx_steps)):
        sel = np.zeros((p.m_p, nvar))
        sel[:, t * p.m_p:(t + 1) * p.m_p] = np.eye(p.m_p)
        G_rows.append(p.U_p.rows @ sel)
        h_rows.append(np.ones(p.U_p.nrows))

    if terminal:
        tau = p.threshold(phase)
        if bucket.levels[N] >= tau:
            regions = ing.regions
            if isinstance(regions, PolytopicRegions):
                Zrows = regions.family[phase].rows
                G_rows.append(Zrows @ Z_N)
                h_rows.append(np.ones(Zrows.shape[0]) - Zrows @ zbar_N)
            elif isinstance(regions, EllipsoidRegions):
                Pp = ing.P(phase)
                quad_rows = ((Z_N.T @ Pp @ Z_N,
                              2.0 * Z_N.T @ Pp @ zbar_N,
                              regions.alpha - float(zbar_N @ Pp @ zbar_N)),)
            elif not isinstance(regions, UnboundedRegions):
                raise InvalidModel(f"unsupported region family {type(regions)}")
        else:
            A_eq = Z_N
            b_eq = -zbar_N

    if nvar == 0:
        viol = 0.0
        for G, h in zip(G_rows, h_rows):
            if h.size:
                viol = max(viol, float(np.max(-h)))
        if A_eq is not None and A_eq.shape[0]:
            viol = max(viol, float(np.max(np.abs(b_eq))))
        for (Pq, qq, rq) in quad_rows:
            viol = max(viol, -float(rq))
        if viol > FEAS_TOL:
            return SchedulePlan(schedule=gammas, feasible=False, levels=bucket.levels)
        theta = np.zeros(0)
        value = c0
    else:
        qp = QuadraticProgram(
            H=symmetrize(H), f=f, constant=c0,
            G=np.vstack(G_rows) if G_rows else None,
            h=np.concatenate(h_rows) if G_rows else None,
            A_eq=A_eq, b_eq=b_eq, quad_rows=quad_rows,
        )
        res = solve_qp(qp)
        if not res.optimal:
            return SchedulePlan(schedule=gammas, feasible=False, levels=bucket.levels)
        theta = res.z
        value = res.value

    states = np.vstack([Xi @ theta + xbi for Xi, xbi in zip(X, xbar)])
    held_rows = [s.u_s.copy()]
    held_rows += [W[i] @ theta + wbar[i] for i in range(N)]
    inputs = tuple(
        theta[tx_steps.index(i) * p.m_p:(tx_steps.index(i) + 1) * p.m_p].copy()
        if gammas[i] == 1 else None
        for i in range(N)
    )
    return SchedulePlan(schedule=gammas, feasible=True, value=value, inputs=inputs,
                        states=states, held=np.vstack(held_rows), levels=bucket.levels)


def tb_applied_input(plan: SchedulePlan, p: TokenBucketParams) -> TokenBucketInput:
    """First move of a plan, as the input object fed to the plant."""
    gamma = plan.schedule[0]
    u_c = plan.inputs[0] if gamma == 1 else np.zeros(p.m_p)
    return TokenBucketInput(u_c=u_c, gamma=gamma)


def _tb_shifted_schedule(plan: SchedulePlan, phase_prev, ing, p: TokenBucketParams):
    """Schedule of the standard shifted candidate: drop the executed move,
    append the terminal controller's transmission decision."""
    beta_N = plan.levels[-1]
    gamma_new = 1 if (phase_prev % ing.M == 0 and beta_N >= p.threshold(0)) else 0
    return plan.schedule[1:] + (gamma_new,)


def solve_tv_mpc_tb(s: TokenBucketState, k, cfg: MpcConfig, ing: PeriodicTerminalIngredients,
                    p: TokenBucketParams, prev_plan: SchedulePlan | None = None,
                    phase=None) -> MpcSolution:
    """Best plan over all bucket-feasible schedules at time k."""
    t0 = time.perf_counter()
    if phase is None:
        phase = phase_index(cfg.j0, k, ing.M)
    if not _tb_state_feasible(s, p):
        raise InfeasibleProblem(k, f"state at step {k} violates the constraint sets")

    tol = cfg.tie_tolerance
    explored = 0
    best_value, best_schedule, best_plan = np.inf, None, None
    values = []

    def consider(plan):
        nonlocal best_value, best_schedule, best_plan
        if not plan.feasible:
            return
        values.append((plan.value, plan.schedule))
        if best_plan is None or _better(plan.value, plan.schedule, best_value, best_schedule, tol):
            best_value, best_schedule, best_plan = plan.value, plan.schedule, plan

    warm_schedule = None
    if cfg.warm_start and prev_plan is not None and prev_plan.feasible:
        warm_schedule = _tb_shifted_schedule(prev_plan, phase - 1, ing, p)
        if bucket_trajectory(s.beta, warm_schedule, p).feasible:
            explored += 1
            consider(solve_fixed_schedule_tb(s, warm_schedule, k, cfg, ing, p, phase=phase))
        else:
            warm_schedule = None

    if cfg.schedule_search == "enumerate":
        for sched in feasible_schedules_tb(s.beta, cfg.horizon, p):
            if sched == warm_schedule:
                continue
            explored += 1
            consider(solve_fixed_schedule_tb(s, sched, k, cfg, ing, p, phase=phase))
    else:
        N = cfg.horizon

        def descend(prefix, beta):
            nonlocal explored
            depth = len(prefix)
            if depth == N:
                if prefix == warm_schedule:
                    return
                explored += 1
                consider(solve_fixed_schedule_tb(s, prefix, k, cfg, ing, p, phase=phase))
                return
            if depth >= 1 and best_plan is not None:
                explored += 1
                bound_plan = solve_fixed_schedule_tb(s, prefix, k, cfg, ing, p,
                                                     phase=phase, terminal=False)
                if not bound_plan.feasible:
                    return  # prefix already violates the shared constraints
                if bound_plan.value > best_value + tol:
                    return  # every completion costs at least the prefix bound
            children = [0, 1] if p.tx_feasible(beta) else [0]
            if warm_schedule is not None and depth < len(warm_schedule):
                first = warm_schedule[depth]
                if first in children:
                    children = [first] + [c for c in children if c != first]
            for gamma in children:
                beta_next = min(beta + p.g - gamma * p.c, p.b)
                descend(prefix + (gamma,), beta_next)

        descend((), s.beta)

    if best_plan is None:
        hint = "" if k == 0 else " despite a feasible predecessor (certificate violation)"
        raise InfeasibleProblem(k, f"no feasible schedule at step {k}{hint}")
    ties = sum(1 for v, _ in values if v <= best_value + tol)
    return MpcSolution(plan=best_plan, value=best_value,
                       solve_seconds=time.perf_counter() - t0,
                       explored=explored, tie_count=ties)


def solve_multistep_mpc_tb(s: TokenBucketState, k, cfg: MpcConfig,
                           ing: PeriodicTerminalIngredients,
                           p: TokenBucketParams) -> MpcSolution:
    """Baseline solve with the fixed terminal pair (S_0, F_0); call at k = 0 mod M."""
    if cfg.horizon < ing.M:
        raise InvalidModel(f"multi-step mode needs horizon >= M = {ing.M}")
    if k % ing.M != 0:
        raise InvalidModel("multi-step MPC re-solves only at multiples of M")
    cfg_ms = replace(cfg, warm_start=False)
    return solve_tv_mpc_tb(s, k, cfg_ms, ing, p, prev_plan=None, phase=0)


# ---------------------------------------------------------------------------
# Actuator scheduling
# ---------------------------------------------------------------------------

def solve_fixed_schedule_act(x_p, sigmas, k, cfg: MpcConfig,
                             ing: PeriodicTerminalIngredients, p: ActuatorParams,
                             phase=None, terminal=True) -> SchedulePlan:
    """Exact optimum for one actuator sequence via backward Riccati recursion."""
    x_p = as_vector(x_p, size=p.n_p)
    sigmas = tuple(int(sg) for sg in sigmas)
    if any(not 0 <= sg < p.M for sg in sigmas):
        raise InvalidModel("actuator indices out of range")
    N = len(sigmas)
    if phase is None:
        phase = phase_index(cfg.j0, k, ing.M)

    Pbar = ing.P(phase).copy() if terminal else np.zeros((p.n_p, p.n_p))
    gains = [None] * N
    reduced_B = [p.B @ act_pi(sg, p.widths).T for sg in sigmas]
    for i in range(N - 1, -1, -1):
        Bi = reduced_B[i]
        Gi = p.R_blocks[sigmas[i]] + Bi.T @ Pbar @ Bi
        Li = np.linalg.solve(Gi, Bi.T @ Pbar @ p.A)
        Pbar = symmetrize(p.Q + p.A.T @ Pbar @ p.A - p.A.T @ Pbar @ Bi @ Li)
        gains[i] = Li

    value = float(x_p @ Pbar @ x_p)
    states = np.zeros((N + 1, p.n_p))
    states[0] = x_p
    inputs = []
    for i in range(N):
        v = -gains[i] @ states[i]
        u_full = act_pi(sigmas[i], p.widths).T @ v
        inputs.append(u_full)
        states[i + 1] = p.A @ states[i] + reduced_B[i] @ v
    return SchedulePlan(schedule=sigmas, feasible=True, value=value,
                        inputs=tuple(inputs), states=states)


def _act_shifted_schedule(plan: SchedulePlan, phase_prev, p: ActuatorParams):
    return plan.schedule[1:] + (p.base_schedule[phase_prev % p.M],)


def solve_tv_mpc_act(x_p, k, cfg: MpcConfig, ing: PeriodicTerminalIngredients,
                     p: ActuatorParams, prev_plan: SchedulePlan | None = None) -> MpcSolution:
    """Best plan over all M^N actuator sequences (always feasible)."""
    t0 = time.perf_counter()
    phase = phase_index(cfg.j0, k, ing.M)
    tol = cfg.tie_tolerance
    explored = 0
    best_value, best_schedule, best_plan = np.inf, None, None
    values = []

    def consider(plan):
        nonlocal best_value, best_schedule, best_plan
        values.append((plan.value, plan.schedule))
        if best_plan is None or _better(plan.value, plan.schedule, best_value, best_schedule, tol):
            best_value, best_schedule, best_plan = plan.value, plan.schedule, plan

    warm_schedule = None
    if cfg.warm_start and prev_plan is not None:
        warm_schedule = _act_shifted_schedule(prev_plan, phase - 1, p)
        explored += 1
        consider(solve_fixed_schedule_act(x_p, warm_schedule, k, cfg, ing, p, phase=phase))

    if cfg.schedule_search == "enumerate":
        for sched in itertools.product(range(p.M), repeat=cfg.horizon):
            if sched == warm_schedule:
                continue
            explored += 1
            consider(solve_fixed_schedule_act(x_p, sched, k, cfg, ing, p, phase=phase))
    else:
        N = cfg.horizon

        def descend(prefix):
            nonlocal explored
            depth = len(prefix)
            if depth == N:
                if prefix == warm_schedule:
                    return
                explored += 1
                consider(solve_fixed_schedule_act(x_p, prefix, k, cfg, ing, p, phase=phase))
                return
            if depth >= 1 and best_plan is not None:
                explored += 1
                bound = solve_fixed_schedule_act(x_p, prefix, k, cfg, ing, p,
                                                 phase=phase, terminal=False)
                if bound.value > best_value + tol:
                    return
            children = list(range(p.M))
            if warm_schedule is not None and depth < len(warm_schedule):
                first = warm_schedule[depth]
                children = [first] + [c for c in children if c != first]
            for sg in children:
                descend(prefix + (sg,))

        descend(())

    ties = sum(1 for v, _ in values if v <= best_value + tol)
    return MpcSolution(plan=best_plan, value=best_value,
                       solve_seconds=time.perf_counter() - t0,
                       explored=explored, tie_count=ties)


# ---------------------------------------------------------------------------
# Controllers: stateful wrappers driving the closed loop
# ---------------------------------------------------------------------------

class TimeVaryingTbController:
    """Re-solves the token bucket problem at every step, rotating the phase."""

    def __init__(self, cfg: MpcConfig, ing: PeriodicTerminalIngredients, p: TokenBucketParams):
        cfg.validate_for(ing.M)
        self.cfg, self.ing, self.p = cfg, ing, p
        self._prev_plan = None

    def step(self, s: TokenBucketState, k):
        sol = solve_tv_mpc_tb(s, k, self.cfg, self.ing, self.p, prev_plan=self._prev_plan)
        self._prev_plan = sol.plan
        return tb_applied_input(sol.plan, self.p), sol

    def stage_cost(self, s, u):
        return tb_stage_cost(s, u, self.p)


class MultiStepTbController:
    """Solves every M steps with the fixed terminal pair and replays the tail."""

    def __init__(self, cfg: MpcConfig, ing: PeriodicTerminalIngredients, p: TokenBucketParams):
        cfg.validate_for(ing.M)
        if cfg.mode != "multi_step":
            raise InvalidModel("MultiStepTbController requires mode='multi_step'")
        self.cfg, self.ing, self.p = cfg, ing, p
        self._plan = None
        self._offset = 0

    def step(self, s: TokenBucketState, k):
        M = self.ing.M
        if k % M == 0:
            sol = solve_multistep_mpc_tb(s, k, self.cfg, self.ing, self.p)
            self._plan = sol.plan
            self._offset = 0
        else:
            sol = None
        i = self._offset
        gamma = self._plan.schedule[i]
        u_c = self._plan.inputs[i] if gamma == 1 else np.zeros(self.p.m_p)
        self._offset += 1
        return TokenBucketInput(u_c=u_c, gamma=gamma), sol

    def stage_cost(self, s, u):
        return tb_stage_cost(s, u, self.p)


class TimeVaryingActController:
    """Re-solves the actuator scheduling problem at every step."""

    def __init__(self, cfg: MpcConfig, ing: PeriodicTerminalIngredients, p: ActuatorParams):
        cfg.validate_for(ing.M)
        self.cfg, self.ing, self.p = cfg, ing, p
        self._prev_plan = None

    def step(self, x_p, k):
        sol = solve_tv_mpc_act(x_p, k, self.cfg, self.ing, self.p, prev_plan=self._prev_plan)
        self._prev_plan = sol.plan
        sigma = sol.plan.schedule[0]
        return (sol.plan.inputs[0], sigma), sol
