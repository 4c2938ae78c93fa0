"""Dense matrix utilities and the three convex-solver contracts (LP, QP, SDP).

Matrices are plain numpy arrays, dense and row-major; problem sizes in this
package (state dimension <= 8, period <= 8) never justify sparsity.  Every
solver wrapper re-checks its own answer through an independent path: LP/QP
results are validated against primal feasibility and KKT residuals, SDP
results against eigenvalue checks of every constraint block evaluated in pure
numpy (no solver trust).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.optimize import linprog

from .errors import InvalidMatrix, InvalidModel, DimensionMismatch, SolverError

SYMMETRY_RTOL = 1e-12

# Default post-condition tolerances (overridable per call where it matters).
LP_TOL = 1e-8
QP_KKT_TOL = 1e-7
SDP_BLOCK_TOL = 1e-7
SDP_STRICT_TOL = 1e-9


def as_matrix(a, rows=None, cols=None):
    """Coerce to a finite 2-D float array, optionally checking its shape."""
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise InvalidMatrix(f"expected 2-D array, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise InvalidMatrix("matrix has non-finite entries")
    if rows is not None and m.shape[0] != rows:
        raise DimensionMismatch(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise DimensionMismatch(f"expected {cols} cols, got {m.shape[1]}")
    return m


def as_vector(v, size=None):
    m = np.asarray(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(m)):
        raise InvalidMatrix("vector has non-finite entries")
    if size is not None and m.size != size:
        raise DimensionMismatch(f"expected length {size}, got {m.size}")
    return m


def check_symmetric(S):
    """Validate symmetry to within SYMMETRY_RTOL * (1 + max|S|); return the array.

    A factor of 10 on top of the nominal tolerance absorbs the float
    non-associativity of block assembly (mirrored entries are computed as
    R' X' L' rather than by transposing L X R).
    """
    S = as_matrix(S)
    if S.shape[0] != S.shape[1]:
        raise InvalidMatrix("symmetric matrix must be square")
    scale = 1.0 + np.max(np.abs(S)) if S.size else 1.0
    if np.max(np.abs(S - S.T), initial=0.0) > SYMMETRY_RTOL * scale * 10:
        raise InvalidMatrix("matrix is not symmetric within tolerance")
    return S


def symmetrize(S):
    return 0.5 * (S + S.T)


def min_eigenvalue(S):
    """Smallest eigenvalue of a symmetric matrix."""
    S = check_symmetric(S)
    if S.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(symmetrize(S))[0])


def is_psd(S, tol=0.0):
    """True iff min_eigenvalue(S) >= -tol."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return min_eigenvalue(S) >= -tol


def spectral_radius(A):
    A = as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise InvalidMatrix("spectral radius needs a square matrix")
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def inverse_pd(S, cond_limit=1e12, what="matrix"):
    """Inverse of a symmetric positive definite matrix, with conditioning guard."""
    S = check_symmetric(S)
    eig = np.linalg.eigvalsh(symmetrize(S))
    if eig[0] <= 0:
        raise InvalidModel(f"{what} is not positive definite (min eig {eig[0]:.3e})")
    if eig[-1] / eig[0] > cond_limit:
        raise InvalidModel(f"{what} condition number {eig[-1] / eig[0]:.3e} exceeds {cond_limit:.1e}")
    return symmetrize(np.linalg.inv(S))


def zoh_discretize(Ac, Bc, h):
    """Zero-order-hold discretization via the augmented matrix exponential.

    Returns (A, B) with A = exp(Ac*h) and B = int_0^h exp(Ac*s) ds * Bc.
    """
    Ac = as_matrix(Ac)
    n = Ac.shape[0]
    if Ac.shape[1] != n:
        raise InvalidModel("Ac must be square")
    Bc = as_matrix(Bc, rows=n)
    if h <= 0:
        raise InvalidModel("sampling period must be positive")
    m = Bc.shape[1]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = Ac
    aug[:n, n:] = Bc
    E = scipy.linalg.expm(aug * h)
    return E[:n, :n].copy(), E[:n, n:].copy()


# ---------------------------------------------------------------------------
# Linear programming
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class LinearProgram:
    """max (or min) c.z subject to G z <= h and optional A_eq z = b_eq."""

    c: np.ndarray
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    sense: str = "max"

    def __post_init__(self):
        self.c = as_vector(self.c)
        n = self.c.size
        if self.G is not None:
            self.G = as_matrix(self.G, cols=n)
            self.h = as_vector(self.h, size=self.G.shape[0])
        if self.A_eq is not None:
            self.A_eq = as_matrix(self.A_eq, cols=n)
            self.b_eq = as_vector(self.b_eq, size=self.A_eq.shape[0])
        if self.sense not in ("max", "min"):
            raise ValueError("sense must be 'max' or 'min'")


@dataclass(eq=False)
class LpResult:
    status: str  # optimal | infeasible | unbounded
    z: np.ndarray | None = None
    value: float | None = None

    @property
    def optimal(self):
        return self.status == "optimal"


def solve_lp(p: LinearProgram) -> LpResult:
    """Solve a small dense LP (HiGHS backend).

    Tight tolerances are tried first; on a numerical failure the solve is
    retried at the solver's stock settings, which cope better with the badly
    conditioned support problems over nearly degenerate image sets.
    """
    sign = -1.0 if p.sense == "max" else 1.0
    res = None
    for options in ({"primal_feasibility_tolerance": 1e-9,
                     "dual_feasibility_tolerance": 1e-9}, {}):
        res = linprog(
            sign * p.c,
            A_ub=p.G, b_ub=p.h,
            A_eq=p.A_eq, b_eq=p.b_eq,
            bounds=[(None, None)] * p.c.size,
            method="highs",
            options=options,
        )
        if res.status in (0, 2, 3):
            break
    if res.status == 2:
        return LpResult("infeasible")
    if res.status == 3:
        return LpResult("unbounded")
    if res.status != 0:
        raise SolverError(f"LP solver failed: {res.message}")
    z = np.asarray(res.x, dtype=float)
    if p.G is not None and np.max(p.G @ z - p.h, initial=0.0) > LP_TOL:
        raise SolverError("LP solution violates inequality constraints beyond tolerance")
    if p.A_eq is not None and np.max(np.abs(p.A_eq @ z - p.b_eq), initial=0.0) > LP_TOL:
        raise SolverError("LP solution violates equality constraints beyond tolerance")
    return LpResult("optimal", z=z, value=float(p.c @ z))


# ---------------------------------------------------------------------------
# Quadratic programming
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class QuadraticProgram:
    """min 0.5 z'Hz + f'z + constant, s.t. G z <= h, A_eq z = b_eq.

    ``quad_rows`` holds optional convex quadratic constraints
    (P, q, r) meaning z'Pz + q'z <= r with P PSD; the fixed-schedule MPC
    subproblem uses one such row for an ellipsoidal terminal region.
    """

    H: np.ndarray
    f: np.ndarray
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    constant: float = 0.0
    quad_rows: tuple = ()
    psd_tol: float = 1e-9

    def __post_init__(self):
        self.H = check_symmetric(self.H)
        self.f = as_vector(self.f, size=self.H.shape[0])
        n = self.f.size
        if min_eigenvalue(self.H) < -self.psd_tol * (1.0 + np.max(np.abs(self.H), initial=0.0)):
            raise InvalidMatrix("QP Hessian is not positive semidefinite")
        if self.G is not None:
            self.G = as_matrix(self.G, cols=n)
            self.h = as_vector(self.h, size=self.G.shape[0])
        if self.A_eq is not None:
            self.A_eq = as_matrix(self.A_eq, cols=n)
            self.b_eq = as_vector(self.b_eq, size=self.A_eq.shape[0])
        rows = []
        for (P, q, r) in self.quad_rows:
            P = check_symmetric(as_matrix(P, rows=n, cols=n))
            if min_eigenvalue(P) < -self.psd_tol * (1.0 + np.max(np.abs(P), initial=0.0)):
                raise InvalidMatrix("quadratic constraint matrix is not PSD")
            rows.append((P, as_vector(q, size=n), float(r)))
        self.quad_rows = tuple(rows)

    @property
    def nvar(self):
        return self.f.size

    def objective(self, z):
        z = as_vector(z, size=self.nvar)
        return float(0.5 * z @ self.H @ z + self.f @ z + self.constant)


@dataclass(eq=False)
class QpResult:
    status: str  # optimal | infeasible
    z: np.ndarray | None = None
    value: float | None = None
    kkt_residual: float | None = None

    @property
    def optimal(self):
        return self.status == "optimal"


def _psd_factor(P, tol=1e-11):
    """W with W'W = P for PSD P (eigen-based, tolerant of zero eigenvalues)."""
    w, V = np.linalg.eigh(symmetrize(P))
    w = np.clip(w, 0.0, None)
    keep = w > tol * max(1.0, w[-1] if w.size else 1.0)
    return (V[:, keep] * np.sqrt(w[keep])).T


def _unit_rows(G, h):
    """Rescale each row of G z <= h (or = h) to unit norm; same constraint set."""
    norms = np.linalg.norm(G, axis=1)
    norms = np.where(norms > 0, norms, 1.0)
    return G / norms[:, None], h / norms


def _drop_zero_rows(G, h, equality, zero_tol=1e-14, feas_tol=1e-9):
    """Remove decision-free rows; returns (G, h, infeasible_flag).

    Rows with an (almost) zero coefficient vector are plain constant checks;
    the interior-point solver must never see them (a zero row corrupts its
    infeasibility certificates), so they are resolved here.
    """
    norms = np.linalg.norm(G, axis=1)
    zero = norms <= zero_tol
    if not np.any(zero):
        return G, h, False
    if equality:
        bad = np.any(np.abs(h[zero]) > feas_tol)
    else:
        bad = np.any(h[zero] < -feas_tol)
    return G[~zero], h[~zero], bool(bad)


def _clarabel_solve(p: QuadraticProgram, scale_rows, settings_tuning):
    import clarabel

    n = p.nvar
    a_rows, b_rows, cones = [], [], []
    infeasible_const = False
    if p.A_eq is not None and p.A_eq.shape[0]:
        Ge, he, bad = _drop_zero_rows(p.A_eq, p.b_eq, equality=True)
        infeasible_const |= bad
        if scale_rows:
            Ge, he = _unit_rows(Ge, he)
        if Ge.shape[0]:
            a_rows.append(Ge)
            b_rows.append(he)
            cones.append(clarabel.ZeroConeT(Ge.shape[0]))
    if p.G is not None and p.G.shape[0]:
        Gi, hi, bad = _drop_zero_rows(p.G, p.h, equality=False)
        infeasible_const |= bad
        if scale_rows:
            Gi, hi = _unit_rows(Gi, hi)
        if Gi.shape[0]:
            a_rows.append(Gi)
            b_rows.append(hi)
            cones.append(clarabel.NonnegativeConeT(Gi.shape[0]))
    if infeasible_const:
        return "constant_infeasible", None, None
    for (P, q, r) in p.quad_rows:
        # z'Pz + q'z <= r  as a second-order cone on s = b - Az:
        # s0 = 1 + (r - q'z), s1 = 1 - (r - q'z), s2: = 2 W z with W'W = P.
        # The row is normalized first; terminal-region data can carry scales
        # of 1e4+ that otherwise stall the interior point.
        s = max(float(np.max(np.abs(P), initial=0.0)),
                float(np.max(np.abs(q), initial=0.0)), abs(r), 1.0)
        Pn, qn, rn = P / s, q / s, r / s
        W = _psd_factor(Pn)
        a_rows.append(np.vstack([qn, -qn, -2.0 * W]))
        b_rows.append(np.concatenate([[1.0 + rn], [1.0 - rn], np.zeros(W.shape[0])]))
        cones.append(clarabel.SecondOrderConeT(2 + W.shape[0]))
    if a_rows:
        A = scipy.sparse.csc_matrix(np.vstack(a_rows))
        b = np.concatenate(b_rows)
    else:
        A = scipy.sparse.csc_matrix((0, n))
        b = np.zeros(0)

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    if settings_tuning == "tight":
        settings.tol_feas = 1e-9
        settings.tol_gap_abs = 1e-9
        settings.tol_gap_rel = 1e-9
    solver = clarabel.DefaultSolver(scipy.sparse.csc_matrix(p.H), p.f, A, b, cones, settings)
    sol = solver.solve()
    return str(sol.status), np.asarray(sol.x, dtype=float), (A, np.asarray(sol.z, dtype=float))


def _qp_residuals(p: QuadraticProgram, z, A, dual):
    scale = 1.0 + max(np.max(np.abs(p.H), initial=0.0), np.max(np.abs(p.f), initial=0.0))
    stationarity = p.H @ z + p.f
    if A.shape[0]:
        stationarity = stationarity + A.T @ dual
    kkt = float(np.max(np.abs(stationarity), initial=0.0)) / scale
    # Violations measured against unit-norm rows, i.e. geometric distance.
    viol = 0.0
    if p.G is not None and p.G.shape[0]:
        Gs, hs = _unit_rows(p.G, p.h)
        viol = max(viol, float(np.max(Gs @ z - hs, initial=0.0)))
    if p.A_eq is not None and p.A_eq.shape[0]:
        Gs, hs = _unit_rows(p.A_eq, p.b_eq)
        viol = max(viol, float(np.max(np.abs(Gs @ z - hs), initial=0.0)))
    for (P, q, r) in p.quad_rows:
        s = max(float(np.max(np.abs(P), initial=0.0)),
                float(np.max(np.abs(q), initial=0.0)), abs(r), 1.0)
        viol = max(viol, float(z @ P @ z + q @ z - r) / s)
    return kkt, viol


def _feasible_point_check(p: QuadraticProgram, z, tol=QP_KKT_TOL):
    _, viol = _qp_residuals(p, z, scipy.sparse.csc_matrix((0, p.nvar)), np.zeros(0))
    return viol <= tol


def solve_qp(p: QuadraticProgram) -> QpResult:
    """Solve a convex QP (Clarabel interior-point backend) and verify KKT residuals.

    Equality constraints are eliminated by null-space substitution first; a
    nearly unreachable equality otherwise wrecks the interior-point geometry.
    Decision-free constraint rows are resolved up front.  The solve ladder is
    deterministic: tight tolerances on the raw data, then stock settings, then
    stock settings with unit-norm rows; an answer is accepted only when the
    explicit stationarity/feasibility check passes.
    """
    if p.A_eq is not None and p.A_eq.shape[0]:
        Es, es = _unit_rows(p.A_eq, p.b_eq)
        z0, *_ = np.linalg.lstsq(Es, es, rcond=None)
        if float(np.max(np.abs(Es @ z0 - es), initial=0.0)) > QP_KKT_TOL:
            return QpResult("infeasible")
        N = scipy.linalg.null_space(Es)
        if N.shape[1] == 0:
            if not _feasible_point_check(p, z0):
                return QpResult("infeasible")
            return QpResult("optimal", z=z0, value=p.objective(z0), kkt_residual=0.0)
        reduced = QuadraticProgram(
            H=symmetrize(N.T @ p.H @ N),
            f=N.T @ (p.H @ z0 + p.f),
            constant=p.objective(z0),
            G=None if p.G is None else p.G @ N,
            h=None if p.G is None else p.h - p.G @ z0,
            quad_rows=tuple(
                (N.T @ P @ N, N.T @ (2.0 * P @ z0 + q), r - float(z0 @ P @ z0 + q @ z0))
                for (P, q, r) in p.quad_rows
            ),
        )
        res = solve_qp(reduced)
        if not res.optimal:
            return res
        z = z0 + N @ res.z
        return QpResult("optimal", z=z, value=p.objective(z), kkt_residual=res.kkt_residual)

    last = None
    for scale_rows, tuning in ((False, "tight"), (False, "stock"), (True, "stock")):
        status, z, extra = _clarabel_solve(p, scale_rows, tuning)
        if status == "constant_infeasible":
            return QpResult("infeasible")
        if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            return QpResult("infeasible")
        if status in ("Solved", "AlmostSolved", "MaxIterations", "InsufficientProgress"):
            A, dual = extra
            kkt, viol = _qp_residuals(p, z, A, dual)
            if kkt <= QP_KKT_TOL and viol <= QP_KKT_TOL:
                return QpResult("optimal", z=z, value=p.objective(z), kkt_residual=kkt)
            last = f"status {status}, kkt={kkt:.2e}, viol={viol:.2e}"
        else:
            last = f"status {status}"
    # An interior-point stall is very often an uncertified infeasibility
    # (e.g. an unreachable terminal equality); settle it with a plain
    # feasibility LP over the linear constraints.
    if not p.quad_rows:
        Gs, hs = (None, None) if p.G is None else _unit_rows(p.G, p.h)
        Es, es = (None, None) if p.A_eq is None else _unit_rows(p.A_eq, p.b_eq)
        probe = linprog(np.zeros(p.nvar), A_ub=Gs, b_ub=hs, A_eq=Es, b_eq=es,
                        bounds=[(None, None)] * p.nvar, method="highs")
        if probe.status == 2:
            return QpResult("infeasible")
    raise SolverError(f"QP solver failed ({last})")


# ---------------------------------------------------------------------------
# Semidefinite programming
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MatrixShape:
    """Declaration of one decision matrix of an SDP."""

    name: str
    rows: int
    cols: int
    symmetric: bool = False
    strictly_positive: bool = False

    def __post_init__(self):
        if self.symmetric and self.rows != self.cols:
            raise InvalidMatrix(f"symmetric variable {self.name} must be square")
        if self.strictly_positive and not self.symmetric:
            raise InvalidMatrix(f"strictly positive variable {self.name} must be symmetric")


@dataclass(eq=False)
class LinearTerm:
    """left @ X @ right (or left @ X.T @ right) for decision matrix X."""

    var: str
    left: np.ndarray
    right: np.ndarray
    transpose: bool = False


@dataclass(eq=False)
class AffineExpr:
    """const + sum of linear terms; one block entry of an LMI."""

    const: np.ndarray
    terms: tuple = ()

    @property
    def shape(self):
        return self.const.shape


def aff(const=None, terms=(), shape=None):
    terms = tuple(terms)
    if const is None:
        if shape is None:
            if not terms:
                raise InvalidMatrix("affine entry needs a constant, a shape, or terms")
            shape = (terms[0].left.shape[0], terms[0].right.shape[1])
        const = np.zeros(shape)
    return AffineExpr(const=as_matrix(const), terms=terms)


def term(left, var, right, transpose=False):
    return LinearTerm(var=var, left=as_matrix(left), right=as_matrix(right), transpose=transpose)


def aff_transpose(e: AffineExpr) -> AffineExpr:
    terms = tuple(
        LinearTerm(var=t.var, left=t.right.T, right=t.left.T, transpose=not t.transpose)
        for t in e.terms
    )
    return AffineExpr(const=e.const.T.copy(), terms=terms)


@dataclass(eq=False)
class BlockConstraint:
    """Symmetric block matrix (given as a full grid of AffineExpr) required PSD."""

    grid: tuple  # tuple of tuples of AffineExpr
    name: str = ""

    @staticmethod
    def from_upper(grid, name=""):
        """Build the full grid from an upper-triangular specification.

        Entries below the diagonal may be None; they are filled with the
        transpose of the mirrored entry.
        """
        nb = len(grid)
        full = [[None] * nb for _ in range(nb)]
        for i in range(nb):
            for j in range(nb):
                if j >= i:
                    if grid[i][j] is None:
                        raise InvalidMatrix("upper triangle of a block constraint must be fully specified")
                    full[i][j] = grid[i][j]
        for i in range(nb):
            for j in range(i):
                full[i][j] = aff_transpose(full[j][i])
        return BlockConstraint(grid=tuple(tuple(row) for row in full), name=name)


@dataclass(eq=False)
class SemidefiniteProgram:
    """Feasibility/linear-objective SDP over named matrix variables.

    ``objective`` is a tuple of (var_name, C) pairs meaning
    maximize sum trace(C' X); empty means pure feasibility.
    """

    variables: tuple
    blocks: tuple
    objective: tuple = ()

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise InvalidMatrix("duplicate SDP variable names")
        self._by_name = {v.name: v for v in self.variables}
        for blk in self.blocks:
            for row in blk.grid:
                for entry in row:
                    for t in entry.terms:
                        if t.var not in self._by_name:
                            raise InvalidMatrix(f"unknown SDP variable {t.var}")

    def variable(self, name):
        return self._by_name[name]


@dataclass(eq=False)
class SdpResult:
    status: str  # feasible | infeasible
    values: dict | None = None
    objective: float | None = None
    block_margins: tuple = ()

    @property
    def feasible(self):
        return self.status == "feasible"


def evaluate_entry(entry: AffineExpr, values: dict) -> np.ndarray:
    out = entry.const.copy()
    for t in entry.terms:
        X = values[t.var]
        out = out + t.left @ (X.T if t.transpose else X) @ t.right
    return out


def evaluate_block(block: BlockConstraint, values: dict) -> np.ndarray:
    """Assemble one LMI block numerically; pure-numpy verification path."""
    rows = []
    for row in block.grid:
        rows.append(np.hstack([evaluate_entry(e, values) for e in row]))
    M = np.vstack(rows)
    return check_symmetric(M)


def _cvxpy_entry(entry: AffineExpr, cvars: dict):
    import cvxpy as cp

    out = cp.Constant(entry.const)
    for t in entry.terms:
        X = cvars[t.var]
        out = out + t.left @ (X.T if t.transpose else X) @ t.right
    return out


def solve_sdp(p: SemidefiniteProgram, strict_eps=1e-6, interior_eps=1e-6,
              block_tol=SDP_BLOCK_TOL, strict_tol=SDP_STRICT_TOL) -> SdpResult:
    """Solve the SDP and independently verify every block by eigenvalue checks.

    The solver works against blocks strengthened by interior_eps * I so that
    objective-active blocks come back with genuine slack instead of hovering
    at the solver tolerance; strictly positive variables are additionally
    pushed off the boundary by X >= strict_eps*I.  The returned matrices are
    re-checked against the original blocks without trusting the solver.
    """
    import cvxpy as cp

    cvars = {}
    for v in p.variables:
        if v.symmetric:
            cvars[v.name] = cp.Variable((v.rows, v.cols), symmetric=True, name=v.name)
        else:
            cvars[v.name] = cp.Variable((v.rows, v.cols), name=v.name)

    constraints = []
    for blk in p.blocks:
        grid = [[_cvxpy_entry(e, cvars) for e in row] for row in blk.grid]
        M = cp.bmat(grid)
        dim = sum(row[0].shape[0] for row in blk.grid)
        constraints.append((M + M.T) / 2 >> interior_eps * np.eye(dim))
    for v in p.variables:
        if v.strictly_positive:
            constraints.append(cvars[v.name] >> strict_eps * np.eye(v.rows))

    if p.objective:
        objective = cp.Maximize(sum(cp.trace(C.T @ cvars[name]) for name, C in p.objective))
    else:
        objective = cp.Minimize(0)

    prob = cp.Problem(objective, constraints)
    solver_opts = {
        cp.CLARABEL: {"tol_feas": 1e-10, "tol_gap_abs": 1e-10, "tol_gap_rel": 1e-10},
        cp.SCS: {"eps_abs": 1e-9, "eps_rel": 1e-9, "max_iters": 25_000},
    }
    last_err = None
    for solver in (cp.CLARABEL, cp.SCS):
        try:
            # cvxpy warns on *_INACCURATE statuses; the independent eigenvalue
            # verification below decides whether the answer is trustworthy.
            with warnings.catch_warnings():
                warnings.filterwarnings("ignore", message="Solution may be inaccurate")
                prob.solve(solver=solver, **solver_opts[solver])
        except cp.error.SolverError as exc:  # pragma: no cover - backend hiccup
            last_err = exc
            continue
        if prob.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return SdpResult("infeasible")
        if prob.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            values = {v.name: np.asarray(cvars[v.name].value, dtype=float) for v in p.variables}
            for v in p.variables:
                if v.symmetric:
                    values[v.name] = symmetrize(values[v.name])
            margins = tuple(min_eigenvalue(evaluate_block(blk, values)) for blk in p.blocks)
            ok = all(m >= -block_tol for m in margins)
            for v in p.variables:
                if v.strictly_positive and min_eigenvalue(values[v.name]) < strict_tol:
                    ok = False
            if ok:
                obj = float(prob.value) if p.objective else 0.0
                return SdpResult("feasible", values=values, objective=obj, block_margins=margins)
            last_err = SolverError(f"{solver}: solution failed independent eigenvalue check")
            continue
        last_err = SolverError(f"{solver}: unexpected status {prob.status}")
    raise SolverError(f"SDP solve failed: {last_err}")
