"""Closed-loop simulation, trace recording, and runtime certificate checks.

A trace stores everything the convergence argument touches: optimal values,
stage costs, and the two telescopes (optimal-value descent and dissipation
of the storage function).  ``check_certificates`` re-evaluates all of them
plus the synthesis margins, so a broken certificate or solver shows up as a
named violation instead of silent drift.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidModel
from .models import (
    ActuatorParams,
    PeriodicTerminalIngredients,
    TokenBucketParams,
    TokenBucketState,
    act_stage_cost,
    act_step,
    tb_stage_cost,
    tb_step,
    tb_storage,
)
from .synthesis import verify_act, verify_tb

CONSTRAINT_TOL = 1e-9
DESCENT_TOL = 1e-6
DISSIPATION_TOL = 1e-9


@dataclass(eq=False)
class ClosedLoopTrace:
    """Columnar record of one closed-loop run (states have one extra row)."""

    kind: str  # token_bucket | actuator
    state_labels: tuple
    input_labels: tuple
    states: np.ndarray
    inputs: np.ndarray
    schedule: np.ndarray
    v_star: np.ndarray
    stage_cost: np.ndarray
    solve_ms: np.ndarray
    nodes: np.ndarray
    descent_slack: np.ndarray
    dissipation_slack: np.ndarray
    tie_counts: np.ndarray | None = None

    @property
    def steps(self):
        return self.inputs.shape[0]

    def header(self):
        return (["k"] + list(self.state_labels) + list(self.input_labels)
                + ["schedule", "V_star", "stage_cost", "solve_ms", "nodes",
                   "descent_slack", "dissipation_slack"])

    def rows(self):
        """String rows of the trace CSV; floats carry 17 significant digits."""
        def fmt(x):
            if isinstance(x, float) and math.isnan(x):
                return "nan"
            return f"{x:.17g}" if isinstance(x, float) else str(x)

        out = []
        for k in range(self.steps):
            row = [str(k)]
            row += [fmt(float(v)) for v in self.states[k]]
            row += [fmt(float(v)) for v in self.inputs[k]]
            row.append(str(int(self.schedule[k])))
            row += [fmt(float(self.v_star[k])), fmt(float(self.stage_cost[k])),
                    fmt(float(self.solve_ms[k])), str(int(self.nodes[k])),
                    fmt(float(self.descent_slack[k])), fmt(float(self.dissipation_slack[k]))]
            out.append(row)
        last = [str(self.steps)] + [fmt(float(v)) for v in self.states[self.steps]]
        last += [""] * (len(self.header()) - len(last))
        out.append(last)
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            w.writerows(self.rows())

    @staticmethod
    def from_csv(path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        state_labels = tuple(h for h in header if h.startswith(("xp", "us", "beta")))
        input_labels = tuple(h for h in header if h.startswith("uc"))
        kind = "token_bucket" if "beta" in state_labels else "actuator"
        ns, ni = len(state_labels), len(input_labels)
        steps = len(rows) - 1
        states = np.array([[float(v) for v in r[1:1 + ns]] for r in rows])
        body = rows[:-1]
        inputs = np.array([[float(v) for v in r[1 + ns:1 + ns + ni]] for r in body]).reshape(steps, ni)
        col = 1 + ns + ni
        schedule = np.array([int(r[col]) for r in body], dtype=int)
        v_star = np.array([float(r[col + 1]) for r in body])
        stage_cost = np.array([float(r[col + 2]) for r in body])
        solve_ms = np.array([float(r[col + 3]) for r in body])
        nodes = np.array([int(r[col + 4]) for r in body], dtype=int)
        descent = np.array([float(r[col + 5]) for r in body])
        dissipation = np.array([float(r[col + 6]) for r in body])
        return ClosedLoopTrace(kind=kind, state_labels=state_labels, input_labels=input_labels,
                               states=states, inputs=inputs, schedule=schedule, v_star=v_star,
                               stage_cost=stage_cost, solve_ms=solve_ms, nodes=nodes,
                               descent_slack=descent, dissipation_slack=dissipation)


def _tb_state_row(s: TokenBucketState):
    return np.concatenate([s.x_p, s.u_s, [float(s.beta)]])


def run_closed_loop(model, controller, x0, steps) -> ClosedLoopTrace:
    """Apply u(k) = u*(0|k) for ``steps`` steps and record everything."""
    if steps < 0:
        raise InvalidModel("steps must be nonnegative")
    if isinstance(model, TokenBucketParams):
        return _run_tb(model, controller, x0, steps)
    if isinstance(model, ActuatorParams):
        return _run_act(model, controller, x0, steps)
    raise InvalidModel(f"unsupported model type {type(model)}")


def _run_tb(p: TokenBucketParams, controller, x0: TokenBucketState, steps):
    n_p, m_p = p.n_p, p.m_p
    state_labels = tuple(f"xp{i}" for i in range(n_p)) + tuple(f"us{i}" for i in range(m_p)) + ("beta",)
    input_labels = tuple(f"uc{i}" for i in range(m_p))

    s = x0
    states = [_tb_state_row(s)]
    inputs, schedule, v_star, stage, solve_ms, nodes, dissipation, ties = [], [], [], [], [], [], [], []
    for k in range(steps):
        u, sol = controller.step(s, k)
        cost = tb_stage_cost(s, u, p)
        s_next = tb_step(s, u, p)
        inputs.append(u.u_c.copy())
        schedule.append(u.gamma)
        v_star.append(sol.value if sol is not None else math.nan)
        stage.append(cost)
        solve_ms.append(1000.0 * sol.solve_seconds if sol is not None else math.nan)
        nodes.append(sol.explored if sol is not None else 0)
        ties.append(sol.tie_count if sol is not None else 0)
        dissipation.append(cost + tb_storage(s, p) - tb_storage(s_next, p))
        states.append(_tb_state_row(s_next))
        s = s_next
    return _assemble_trace("token_bucket", state_labels, input_labels, states, inputs,
                           schedule, v_star, stage, solve_ms, nodes, dissipation, ties,
                           n_input_cols=m_p)


def _run_act(p: ActuatorParams, controller, x0, steps):
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.size != p.n_p:
        raise DimensionMismatch("initial state dimension mismatch")
    state_labels = tuple(f"xp{i}" for i in range(p.n_p))
    input_labels = tuple(f"uc{i}" for i in range(p.m_p))

    states = [x.copy()]
    inputs, schedule, v_star, stage, solve_ms, nodes, dissipation, ties = [], [], [], [], [], [], [], []
    for k in range(steps):
        (u_full, sigma), sol = controller.step(x, k)
        cost = act_stage_cost(x, u_full, sigma, p)
        x = act_step(x, u_full, sigma, p)
        inputs.append(np.asarray(u_full, dtype=float))
        schedule.append(int(sigma))
        v_star.append(sol.value if sol is not None else math.nan)
        stage.append(cost)
        solve_ms.append(1000.0 * sol.solve_seconds if sol is not None else math.nan)
        nodes.append(sol.explored if sol is not None else 0)
        ties.append(sol.tie_count if sol is not None else 0)
        dissipation.append(cost)  # storage function is zero for this setup
        states.append(x.copy())
    return _assemble_trace("actuator", state_labels, input_labels, states, inputs,
                           schedule, v_star, stage, solve_ms, nodes, dissipation, ties,
                           n_input_cols=p.m_p)


def _assemble_trace(kind, state_labels, input_labels, states, inputs, schedule,
                    v_star, stage, solve_ms, nodes, dissipation, ties, n_input_cols):
    steps = len(inputs)
    v = np.asarray(v_star, dtype=float)
    stage_arr = np.asarray(stage, dtype=float)
    descent = np.full(steps, math.nan)
    for k in range(steps - 1):
        descent[k] = v[k + 1] - v[k] + stage_arr[k]
    return ClosedLoopTrace(
        kind=kind,
        state_labels=tuple(state_labels),
        input_labels=tuple(input_labels),
        states=np.vstack(states),
        inputs=np.vstack(inputs) if steps else np.zeros((0, n_input_cols)),
        schedule=np.asarray(schedule, dtype=int),
        v_star=v,
        stage_cost=stage_arr,
        solve_ms=np.asarray(solve_ms, dtype=float),
        nodes=np.asarray(nodes, dtype=int),
        descent_slack=descent,
        dissipation_slack=np.asarray(dissipation, dtype=float),
        tie_counts=np.asarray(ties, dtype=int),
    )


@dataclass(eq=False)
class CertificateReport:
    """Per-step residuals plus the offline margins, with one verdict per family."""

    descent_slacks: np.ndarray
    dissipation_slacks: np.ndarray
    constraint_margins: np.ndarray
    terminal_margins: tuple
    descent_ok: bool
    dissipation_ok: bool
    constraints_ok: bool
    terminal_ok: bool
    messages: tuple

    @property
    def passed(self):
        return self.descent_ok and self.dissipation_ok and self.constraints_ok and self.terminal_ok


def check_certificates(trace: ClosedLoopTrace, ing: PeriodicTerminalIngredients, model,
                       eps=1e-8, descent_tol=DESCENT_TOL,
                       dissipation_tol=DISSIPATION_TOL) -> CertificateReport:
    """Evaluate the runtime convergence certificates along a trace.

    Descent: V*(k+1) - V*(k) + stage(k) <= descent_tol (steps without a solve
    are skipped).  Dissipation: stage + storage - storage+ must dominate the
    strictness margin eps * squared distance to the optimal operating set.
    Constraints and the offline terminal-decrease margins are re-checked too.
    """
    msgs = []
    steps = trace.steps

    finite = ~np.isnan(trace.descent_slack)
    descent_ok = bool(np.all(trace.descent_slack[finite] <= descent_tol))
    if not descent_ok:
        worst = int(np.nanargmax(trace.descent_slack))
        msgs.append(f"descent violated at k={worst}: slack {trace.descent_slack[worst]:.3e}")

    if trace.kind == "token_bucket":
        n_p, m_p = model.n_p, model.m_p
        dist2 = np.array([
            float(np.sum(trace.states[k, :n_p] ** 2) + np.sum(trace.states[k, n_p:n_p + m_p] ** 2))
            for k in range(steps)
        ])
    else:
        dist2 = np.array([float(np.sum(trace.states[k] ** 2)) for k in range(steps)])
    dissipation_ok = bool(np.all(trace.dissipation_slack >= eps * dist2 - dissipation_tol))
    if not dissipation_ok:
        worst = int(np.argmin(trace.dissipation_slack - eps * dist2))
        msgs.append(f"dissipation violated at k={worst}: slack {trace.dissipation_slack[worst]:.3e}")

    if trace.kind == "token_bucket":
        n_p, m_p = model.n_p, model.m_p
        margins = np.zeros(steps + 1)
        for k in range(steps + 1):
            x_p = trace.states[k, :n_p]
            u_s = trace.states[k, n_p:n_p + m_p]
            beta = trace.states[k, n_p + m_p]
            viol = max(
                float(np.max(model.X_p.rows @ x_p - 1.0, initial=-np.inf)),
                float(np.max(model.U_p.rows @ u_s - 1.0, initial=-np.inf)),
                float(-beta),
                float(beta - model.b),
            )
            margins[k] = viol
        constraints_ok = bool(np.all(margins <= CONSTRAINT_TOL))
        if not constraints_ok:
            worst = int(np.argmax(margins))
            msgs.append(f"state constraints violated at k={worst}: margin {margins[worst]:.3e}")
        terminal_margins = tuple(verify_tb(ing.cost_matrices, ing.gain, model))
    else:
        margins = np.zeros(steps + 1)
        constraints_ok = True
        terminal_margins = tuple(verify_act(ing.cost_matrices, ing.gains, model))

    terminal_ok = all(m >= -DESCENT_TOL for m in terminal_margins)
    if not terminal_ok:
        msgs.append("offline terminal-decrease margins violated")

    return CertificateReport(
        descent_slacks=trace.descent_slack,
        dissipation_slacks=trace.dissipation_slack,
        constraint_margins=margins,
        terminal_margins=terminal_margins,
        descent_ok=descent_ok,
        dissipation_ok=dissipation_ok,
        constraints_ok=constraints_ok,
        terminal_ok=terminal_ok,
        messages=tuple(msgs),
    )
