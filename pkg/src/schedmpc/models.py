"""Dynamics, constraints, stage costs and terminal ingredients for the two
networked-control setups: transmission over a token bucket network and
actuator scheduling with a set-to-zero policy.

Bucket levels are exact integers: with integer refill rate g, transmission
cost c and capacity b the recursion min(beta + g - gamma*c, b) never leaves
the integers, and schedule feasibility stays free of floating-point drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    InsufficientTokens,
    InvalidModel,
    NotInTerminalSet,
)
from .numerics import as_matrix, as_vector, check_symmetric, min_eigenvalue
from .polytope import PeriodicPolytopeFamily, Polytope, product

ORIGIN_TOL = 1e-9


def _check_pd(S, name):
    S = check_symmetric(S)
    if min_eigenvalue(S) <= 0:
        raise InvalidModel(f"{name} must be positive definite")
    return S


# ---------------------------------------------------------------------------
# Token bucket network
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class TokenBucketParams:
    """Plant, cost and network data for the token bucket setup.

    Network integers satisfy g >= 1, c >= g, b >= c; the terminal period is
    M = ceil(c / g).  A transmission at level beta is feasible iff the
    successor level beta + g - c stays nonnegative, i.e. beta >= c - g.
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    g: int
    c: int
    b: int
    X_p: Polytope
    U_p: Polytope

    def __post_init__(self):
        self.A = as_matrix(self.A)
        n_p = self.A.shape[0]
        if self.A.shape[1] != n_p:
            raise InvalidModel("A must be square")
        self.B = as_matrix(self.B, rows=n_p)
        self.Q = _check_pd(as_matrix(self.Q, rows=n_p, cols=n_p), "Q")
        m_p = self.B.shape[1]
        self.R = _check_pd(as_matrix(self.R, rows=m_p, cols=m_p), "R")
        if not (isinstance(self.g, int) and isinstance(self.c, int) and isinstance(self.b, int)):
            raise InvalidModel("g, c, b must be integers")
        if self.g < 1 or self.c < self.g or self.b < self.c:
            raise InvalidModel("token bucket needs g >= 1, c >= g, b >= c")
        if self.X_p.dim != n_p or self.U_p.dim != m_p:
            raise DimensionMismatch("constraint polytope dimensions do not match the plant")

    @property
    def n_p(self):
        return self.A.shape[0]

    @property
    def m_p(self):
        return self.B.shape[1]

    @property
    def M(self):
        return math.ceil(self.c / self.g)

    @property
    def n_z(self):
        """Dimension of the (plant state, held input) pair."""
        return self.n_p + self.m_p

    def constraint_box(self):
        """X_p x U_p as one polytope in the (x_p, u_s) coordinates."""
        return product(self.X_p, self.U_p)

    # Lifted matrices for the (x_p, u_s) dynamics under the terminal scheme:
    # A_tilde/B_tilde describe a transmission step, A_hold a held step.
    def A_tilde(self):
        n, m = self.n_p, self.m_p
        out = np.zeros((n + m, n + m))
        out[:n, :n] = self.A
        return out

    def B_tilde(self):
        return np.vstack([self.B, np.eye(self.m_p)])

    def A_hold(self):
        n, m = self.n_p, self.m_p
        out = np.zeros((n + m, n + m))
        out[:n, :n] = self.A
        out[:n, n:] = self.B
        out[n:, n:] = np.eye(m)
        return out

    def A_closed(self, K):
        """A'' = A_tilde + B_tilde K for a transmission gain K."""
        K = as_matrix(K, rows=self.m_p, cols=self.n_z)
        return self.A_tilde() + self.B_tilde() @ K

    def tx_feasible(self, beta):
        return beta + self.g - self.c >= 0

    def threshold(self, j):
        """Bucket threshold separating the origin branch from the Z branch of S_j."""
        j = j % self.M
        return self.c - self.g if j == 0 else (j - 1) * self.g


@dataclass(eq=False)
class TokenBucketState:
    x_p: np.ndarray
    u_s: np.ndarray
    beta: int

    def __post_init__(self):
        self.x_p = as_vector(self.x_p)
        self.u_s = as_vector(self.u_s)
        if not isinstance(self.beta, (int, np.integer)):
            raise InvalidModel("bucket level must be an integer")
        self.beta = int(self.beta)

    @property
    def z(self):
        """Stacked (x_p, u_s) pair."""
        return np.concatenate([self.x_p, self.u_s])


@dataclass(eq=False)
class TokenBucketInput:
    u_c: np.ndarray
    gamma: int

    def __post_init__(self):
        self.u_c = as_vector(self.u_c)
        if self.gamma not in (0, 1):
            raise InvalidModel("transmission decision must be 0 or 1")
        self.gamma = int(self.gamma)


def tb_step(s: TokenBucketState, u: TokenBucketInput, p: TokenBucketParams) -> TokenBucketState:
    """One step of the token bucket NCS dynamics."""
    if u.gamma == 1 and not p.tx_feasible(s.beta):
        raise InsufficientTokens(
            f"transmission at bucket level {s.beta} would drive the level to "
            f"{s.beta + p.g - p.c} < 0"
        )
    effective = u.u_c if u.gamma == 1 else s.u_s
    x_next = p.A @ s.x_p + p.B @ effective
    beta_next = min(s.beta + p.g - u.gamma * p.c, p.b)
    return TokenBucketState(x_p=x_next, u_s=effective.copy(), beta=beta_next)


def tb_stage_cost(s: TokenBucketState, u: TokenBucketInput, p: TokenBucketParams) -> float:
    """x_p'Qx_p + (1-gamma) u_s'Ru_s + gamma u_c'Ru_c; not positive definite in u_s."""
    cost = float(s.x_p @ p.Q @ s.x_p)
    if u.gamma == 1:
        cost += float(u.u_c @ p.R @ u.u_c)
    else:
        cost += float(s.u_s @ p.R @ s.u_s)
    return cost


def tb_storage(s: TokenBucketState, p: TokenBucketParams) -> float:
    """Storage function of the dissipation certificate, ||u_s||_R^2."""
    return float(s.u_s @ p.R @ s.u_s)


# ---------------------------------------------------------------------------
# Terminal ingredients (shared by both setups)
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class PolytopicRegions:
    family: PeriodicPolytopeFamily

    def contains(self, j, z, P_j=None, tol=ORIGIN_TOL):
        return self.family[j].contains(z, tol=tol)


@dataclass(eq=False)
class EllipsoidRegions:
    """Level sets {z : z' P_j z <= alpha} of the terminal cost matrices."""

    alpha: float

    def contains(self, j, z, P_j=None, tol=ORIGIN_TOL):
        return float(z @ P_j @ z) <= self.alpha + tol


@dataclass(eq=False)
class UnboundedRegions:
    """All of state space; used when the setup carries no constraints."""

    def contains(self, j, z, P_j=None, tol=ORIGIN_TOL):
        return True


@dataclass(eq=False)
class PeriodicTerminalIngredients:
    """M-periodic terminal costs, regions and transmission gain(s).

    The token bucket scheme uses one shared gain applied at phase 0; actuator
    scheduling carries one gain per phase.
    """

    cost_matrices: tuple
    regions: object
    gain: np.ndarray | None = None
    gains: tuple | None = None

    def __post_init__(self):
        mats = []
        for j, P in enumerate(self.cost_matrices):
            mats.append(_check_pd(as_matrix(P), f"terminal cost matrix P_{j}"))
        self.cost_matrices = tuple(mats)
        if self.gain is not None:
            self.gain = as_matrix(self.gain)
        if self.gains is not None:
            self.gains = tuple(as_matrix(K) for K in self.gains)

    @property
    def M(self):
        return len(self.cost_matrices)

    def P(self, j):
        return self.cost_matrices[j % self.M]

    def terminal_cost(self, j, z):
        z = as_vector(z)
        return float(z @ self.P(j) @ z)

    def region_contains(self, j, z, tol=ORIGIN_TOL):
        return self.regions.contains(j % self.M, z, P_j=self.P(j), tol=tol)


def tb_terminal_membership(s: TokenBucketState, j, ing: PeriodicTerminalIngredients,
                           p: TokenBucketParams, tol=ORIGIN_TOL) -> bool:
    """Membership in S_j: origin pair with a low bucket, or Z_j with a full one."""
    tau = p.threshold(j)
    z = s.z
    at_origin = float(np.max(np.abs(z), initial=0.0)) <= tol
    if at_origin and s.beta < tau:
        return True
    return s.beta >= tau and ing.region_contains(j, z, tol=tol)


def tb_terminal_controller(s: TokenBucketState, j, ing: PeriodicTerminalIngredients,
                           p: TokenBucketParams) -> TokenBucketInput:
    """Terminal policy: transmit K [x_p; u_s] at phase 0 when the bucket allows."""
    if not tb_terminal_membership(s, j, ing, p):
        raise NotInTerminalSet(f"state not in terminal region S_{j % p.M}")
    j = j % p.M
    if j == 0 and s.beta >= p.threshold(0):
        return TokenBucketInput(u_c=ing.gain @ s.z, gamma=1)
    return TokenBucketInput(u_c=np.zeros(p.m_p), gamma=0)


# ---------------------------------------------------------------------------
# Actuator scheduling
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ActuatorParams:
    """Plant and cost data for scheduling one actuator per step.

    R is block diagonal with one block per actuator; widths give the input
    dimension of each actuator and must sum to the plant input dimension.
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R_blocks: tuple
    widths: tuple
    base_schedule: tuple

    def __post_init__(self):
        self.A = as_matrix(self.A)
        n_p = self.A.shape[0]
        if self.A.shape[1] != n_p:
            raise InvalidModel("A must be square")
        self.B = as_matrix(self.B, rows=n_p)
        self.Q = _check_pd(as_matrix(self.Q, rows=n_p, cols=n_p), "Q")
        self.widths = tuple(int(w) for w in self.widths)
        if any(w < 1 for w in self.widths):
            raise InvalidModel("every actuator width must be >= 1")
        if sum(self.widths) != self.B.shape[1]:
            raise InvalidModel("actuator widths must sum to the input dimension")
        if len(self.R_blocks) != len(self.widths):
            raise InvalidModel("one R block per actuator required")
        blocks = []
        for j, (Rb, w) in enumerate(zip(self.R_blocks, self.widths)):
            blocks.append(_check_pd(as_matrix(Rb, rows=w, cols=w), f"R_{j}"))
        self.R_blocks = tuple(blocks)
        self.base_schedule = tuple(int(s) for s in self.base_schedule)
        if len(self.base_schedule) != self.M:
            raise InvalidModel("base schedule must have one entry per actuator phase")
        if any(not 0 <= s < self.M for s in self.base_schedule):
            raise InvalidModel("base schedule entries must index an actuator")

    @property
    def n_p(self):
        return self.A.shape[0]

    @property
    def m_p(self):
        return self.B.shape[1]

    @property
    def M(self):
        return len(self.widths)

    @property
    def R(self):
        return scipy.linalg.block_diag(*self.R_blocks)


def act_omega(sigma, widths):
    """Diagonal selector keeping only the components of actuator sigma."""
    widths = tuple(int(w) for w in widths)
    if not 0 <= sigma < len(widths):
        raise IndexError(f"actuator index {sigma} out of range")
    m_p = sum(widths)
    start = sum(widths[:sigma])
    d = np.zeros(m_p)
    d[start:start + widths[sigma]] = 1.0
    return np.diag(d)


def act_pi(sigma, widths):
    """Row selector extracting the components of actuator sigma."""
    widths = tuple(int(w) for w in widths)
    if not 0 <= sigma < len(widths):
        raise IndexError(f"actuator index {sigma} out of range")
    m_p = sum(widths)
    start = sum(widths[:sigma])
    out = np.zeros((widths[sigma], m_p))
    out[:, start:start + widths[sigma]] = np.eye(widths[sigma])
    return out


def act_step(x_p, u_c, sigma, p: ActuatorParams):
    """x+ = A x_p + B Omega_sigma u_c; unselected input components are inert."""
    x_p = as_vector(x_p, size=p.n_p)
    u_c = as_vector(u_c, size=p.m_p)
    return p.A @ x_p + p.B @ (act_omega(sigma, p.widths) @ u_c)


def act_stage_cost(x_p, u_c, sigma, p: ActuatorParams) -> float:
    x_p = as_vector(x_p, size=p.n_p)
    u_c = as_vector(u_c, size=p.m_p)
    v = act_pi(sigma, p.widths) @ u_c
    return float(x_p @ p.Q @ x_p + v @ p.R_blocks[sigma] @ v)
