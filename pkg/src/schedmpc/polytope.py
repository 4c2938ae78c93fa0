"""H-representation polytopes and the periodic terminal-region construction.

Every polytope here is normalized so each row reads c_i . x <= 1, which forces
the origin to be strictly inside.  This matches how the constraint sets and
the periodic families of terminal regions are written throughout the package.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidModel,
    NotConverged,
    SolverError,
    Unbounded,
    VerificationFailed,
)
from .numerics import LinearProgram, LpResult, as_matrix, as_vector, solve_lp, spectral_radius

INCLUSION_TOL = 1e-8
REDUNDANCY_TOL = 1e-9
DEFAULT_MAX_ITER = 200
# Rows with a norm this small bound nothing within a 1e9 ball around the
# origin; all sets in this package live well inside that.
VACUOUS_ROW_TOL = 1e-9


def _row_lp(c, rows):
    """max c.x over {rows @ x <= 1}, robust to extreme row scales.

    Rows are rescaled to unit norm first (thin image sets legitimately carry
    huge rows); if the solver still reports the structurally impossible
    "infeasible" for this origin-containing system, the raw rows are tried
    before giving up.
    """
    norms = np.linalg.norm(rows, axis=1)
    keep = norms > VACUOUS_ROW_TOL
    rows = rows[keep]
    norms = norms[keep]
    if rows.shape[0] == 0:
        return LpResult("unbounded")
    res = solve_lp(LinearProgram(c=c, G=rows / norms[:, None], h=1.0 / norms))
    if res.status == "infeasible":
        res = solve_lp(LinearProgram(c=c, G=rows, h=np.ones(rows.shape[0])))
        if res.status == "infeasible":
            raise SolverError("support LP reported infeasible for an "
                              "origin-containing row system (numerical failure)")
    return res


@dataclass(eq=False)
class Polytope:
    """{x in R^n : rows @ x <= 1 row-wise}."""

    rows: np.ndarray

    def __post_init__(self):
        self.rows = as_matrix(self.rows)

    @property
    def dim(self):
        return self.rows.shape[1]

    @property
    def nrows(self):
        return self.rows.shape[0]

    @staticmethod
    def box(half_widths):
        """Axis-aligned box [-w_i, w_i] per coordinate."""
        w = as_vector(half_widths)
        if np.any(w <= 0):
            raise InvalidModel("box half-widths must be positive")
        rows = np.vstack([np.diag(1.0 / w), -np.diag(1.0 / w)])
        return Polytope(rows)

    def contains(self, x, tol=0.0):
        x = as_vector(x, size=self.dim)
        return bool(np.all(self.rows @ x <= 1.0 + tol))

    def scale(self, alpha):
        """alpha * P for alpha > 0."""
        if alpha <= 0:
            raise InvalidModel("scaling factor must be positive")
        return Polytope(self.rows / alpha)

    def intersect(self, other):
        if other.dim != self.dim:
            raise DimensionMismatch("polytope dimensions differ")
        return Polytope(np.vstack([self.rows, other.rows]))

    def preimage(self, Amap):
        """{x : Amap @ x in self}."""
        Amap = as_matrix(Amap, rows=self.dim)
        return Polytope(self.rows @ Amap)

    def support(self, direction):
        """max_{x in P} direction . x via LP; raises Unbounded if unbounded."""
        direction = as_vector(direction, size=self.dim)
        scale = float(np.linalg.norm(direction))
        if scale == 0.0:
            return 0.0
        res = _row_lp(direction / scale, self.rows)
        if res.status == "unbounded":
            raise Unbounded("polytope is unbounded in the queried direction")
        return scale * res.value

    def to_dict(self):
        return {"dim": int(self.dim), "rows": [[float(v) for v in row] for row in self.rows]}

    @staticmethod
    def from_dict(d):
        rows = as_matrix(d["rows"])
        if rows.shape[1] != int(d["dim"]):
            raise DimensionMismatch("polytope dim field does not match rows")
        return Polytope(rows)


def product(P: Polytope, Q: Polytope) -> Polytope:
    """Cartesian product P x Q in block coordinates."""
    top = np.hstack([P.rows, np.zeros((P.nrows, Q.dim))])
    bot = np.hstack([np.zeros((Q.nrows, P.dim)), Q.rows])
    return Polytope(np.vstack([top, bot]))


def contains(P: Polytope, x, tol=0.0) -> bool:
    return P.contains(x, tol=tol)


def image_contained(Amap, P: Polytope, Q: Polytope, tol=INCLUSION_TOL) -> bool:
    """True iff Amap @ P is contained in Q, checked one support LP per row of Q."""
    Amap = as_matrix(Amap, cols=P.dim)
    if Amap.shape[0] != Q.dim:
        raise DimensionMismatch("map output dimension does not match target polytope")
    for q in Q.rows:
        if P.support(q @ Amap) > 1.0 + tol:
            return False
    return True


def remove_redundant(P: Polytope, tol=REDUNDANCY_TOL) -> Polytope:
    """Drop rows certified redundant by an LP; keeps the point set identical.

    A row whose certificate LP fails numerically (possible over sliver sets
    with extreme row scales) is kept — conservative and always correct, since
    keeping a redundant row never changes the set.
    """
    rows = np.unique(P.rows, axis=0)
    norms = np.linalg.norm(rows, axis=1)
    rows = rows[norms > VACUOUS_ROW_TOL]
    keep = np.ones(rows.shape[0], dtype=bool)
    for i in range(rows.shape[0]):
        others = rows[[j for j in range(rows.shape[0]) if keep[j] and j != i]]
        if others.shape[0] == 0:
            continue
        scale = float(np.linalg.norm(rows[i]))
        try:
            res = _row_lp(rows[i] / scale, others)
        except SolverError:
            continue
        if res.status == "unbounded":
            continue  # row is the only bound in its direction
        if scale * res.value <= 1.0 + tol:
            keep[i] = False
    return Polytope(rows[keep])


def max_invariant_polytope(Acl, X0: Polytope, max_iter=DEFAULT_MAX_ITER) -> Polytope:
    """Maximal invariant polytope inside X0 for x+ = Acl x.

    Standard constraint backpropagation: intersect X0 with preimages of itself
    under increasing powers of Acl until one more step removes nothing.
    """
    Acl = as_matrix(Acl, rows=X0.dim, cols=X0.dim)
    rho = spectral_radius(Acl)
    if rho >= 1.0:
        warnings.warn(f"closed-loop spectral radius {rho:.4f} >= 1; invariant set may be degenerate")
    Z = remove_redundant(X0)
    rows_pow = X0.rows
    for _ in range(max_iter):
        if image_contained(Acl, Z, Z):
            return Z
        rows_pow = rows_pow @ Acl
        Z = remove_redundant(Z.intersect(Polytope(rows_pow)))
    raise NotConverged(max_iter)


def max_scaling(maps, Z: Polytope, box: Polytope) -> float:
    """Largest alpha in [0, 1] with alpha * L @ Z inside box for every map L."""
    alpha = 1.0
    for L in maps:
        L = as_matrix(L, rows=box.dim, cols=Z.dim)
        for b_row in box.rows:
            s = Z.support(b_row @ L)
            if s > 0.0:
                alpha = min(alpha, 1.0 / s)
    return max(alpha, 0.0)


@dataclass(eq=False)
class PeriodicPolytopeFamily:
    """M polytopes Z_0..Z_{M-1} rotated by the periodic terminal scheme."""

    sets: tuple

    def __post_init__(self):
        self.sets = tuple(self.sets)
        if not self.sets:
            raise InvalidModel("periodic family must contain at least one set")
        dims = {Z.dim for Z in self.sets}
        if len(dims) != 1:
            raise DimensionMismatch("all members of a periodic family share one dimension")

    @property
    def M(self):
        return len(self.sets)

    @property
    def dim(self):
        return self.sets[0].dim

    def __getitem__(self, j):
        return self.sets[j % self.M]

    def to_dict(self):
        return {"M": self.M, "sets": [Z.to_dict() for Z in self.sets]}

    @staticmethod
    def from_dict(d):
        return PeriodicPolytopeFamily(tuple(Polytope.from_dict(s) for s in d["sets"]))


def verify_family(family: PeriodicPolytopeFamily, A_tx, A_hold, box=None, tol=INCLUSION_TOL):
    """Check the periodic invariance chain; raises VerificationFailed(j) on violation.

    Chain: A_tx Z_0 in Z_1, A_hold Z_j in Z_{j+1} for j in [1, M-2],
    A_hold Z_{M-1} in Z_0 (for M = 1 the single check is A_tx Z_0 in Z_0).
    Optionally checks every Z_j against an enclosing box.
    """
    M = family.M
    if M == 1:
        if not image_contained(A_tx, family[0], family[0], tol=tol):
            raise VerificationFailed(0, "A'' Z_0 not contained in Z_0")
    else:
        if not image_contained(A_tx, family[0], family[1], tol=tol):
            raise VerificationFailed(0, "A'' Z_0 not contained in Z_1")
        for j in range(1, M - 1):
            if not image_contained(A_hold, family[j], family[j + 1], tol=tol):
                raise VerificationFailed(j, f"A' Z_{j} not contained in Z_{j + 1}")
        if not image_contained(A_hold, family[M - 1], family[0], tol=tol):
            raise VerificationFailed(M - 1, f"A' Z_{M - 1} not contained in Z_0")
    if box is not None:
        eye = np.eye(family.dim)
        for j in range(M):
            if not image_contained(eye, family[j], box, tol=tol):
                raise VerificationFailed(j, f"Z_{j} leaves the constraint box")


def _linear_image(T, Z: Polytope, rel_fattening=1e-7) -> Polytope:
    """H-rep of T @ Z; exact for invertible T, outer description otherwise.

    A singular map produces a lower-dimensional image that the c.x <= 1
    normalization cannot express exactly; the outer description fattens the
    flat directions by ``rel_fattening`` times the largest support value.
    """
    T = as_matrix(T, rows=Z.dim, cols=Z.dim)
    u, s, vt = np.linalg.svd(T)
    if s[-1] > 1e-8 * max(1.0, s[0]):
        return Polytope(Z.rows @ np.linalg.inv(T))
    # Support-function outer approximation: pseudo-inverse images of the rows
    # plus both signs of the (numerical) null space of T'.
    directions = [row @ np.linalg.pinv(T, rcond=1e-8) for row in Z.rows]
    null_dirs = u[:, s <= 1e-8 * max(1.0, s[0])].T
    for d in null_dirs:
        directions.append(d)
        directions.append(-d)
    pairs = []
    for d in directions:
        nrm = np.linalg.norm(d)
        if nrm == 0.0:
            continue
        pairs.append((d / nrm, Z.support((d / nrm) @ T)))
    floor = rel_fattening * max([h for _, h in pairs] + [1.0])
    rows = [d / max(h, floor) for d, h in pairs]
    return Polytope(np.asarray(rows))


def build_periodic_family(Z: Polytope, alpha_star, A_tx, A_hold, M) -> PeriodicPolytopeFamily:
    """Scaled-image family Z_0 = a*Z, Z_j = a*(A_hold^{j-1} A_tx) Z, then verify."""
    if not 0.0 < alpha_star <= 1.0:
        raise InvalidModel("alpha_star must lie in (0, 1]")
    A_tx = as_matrix(A_tx, rows=Z.dim, cols=Z.dim)
    A_hold = as_matrix(A_hold, rows=Z.dim, cols=Z.dim)
    sets = [Z.scale(alpha_star)]
    T = A_tx
    for _ in range(1, M):
        sets.append(_linear_image(T, Z).scale(alpha_star))
        T = A_hold @ T
    family = PeriodicPolytopeFamily(tuple(remove_redundant(S) for S in sets))
    verify_family(family, A_tx, A_hold)
    return family
