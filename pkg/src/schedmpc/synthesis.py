"""Offline synthesis of periodic terminal costs, gains and regions.

The decrease conditions are posed as LMIs in the inverse cost matrices
X_j = P_j^{-1} (plus Y = K X_0 for the transmission gain), solved as an SDP,
and then re-verified through an independent path: the condensed quadratic
decrease inequalities are evaluated in plain numpy and their eigenvalue
margins must come out nonnegative up to tolerance.  Region construction is
either polytopic (invariant-set pipeline) or ellipsoidal (level sets of the
terminal costs with the largest feasible radius found by bisection).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import SdpInfeasible, SolverError, VerificationFailed
from .models import (
    ActuatorParams,
    EllipsoidRegions,
    PeriodicTerminalIngredients,
    PolytopicRegions,
    TokenBucketParams,
    UnboundedRegions,
    act_omega,
    act_pi,
)
from .numerics import (
    BlockConstraint,
    MatrixShape,
    SemidefiniteProgram,
    aff,
    as_matrix,
    inverse_pd,
    min_eigenvalue,
    solve_sdp,
    spectral_radius,
    symmetrize,
    term,
)
from .polytope import (
    PeriodicPolytopeFamily,
    Polytope,
    build_periodic_family,
    max_invariant_polytope,
    max_scaling,
    product,
    verify_family,
)

MARGIN_TOL = 1e-6
ALPHA_REL_TOL = 1e-4
# Trace maximization alone is unbounded in the held-input directions of X_0
# (a deadbeat gain can zero the held input at no cost), so X_0 is capped at a
# data-scaled multiple of the bound diag(Q,R)^{-1} that the held phases obey.
# The factor stays small so block norms stay O(10) and the absolute eigenvalue
# tolerances of the solve_sdp contract remain meaningful.
X0_CAP_FACTOR = 10.0
# The terminal cost matrices are recovered from the exact periodic Lyapunov
# equalities with a +delta*I strengthening, delta = MARGIN_SLACK times the
# smallest cost eigenvalue.  The SDP iterate itself hugs the decrease
# boundary, and inverting it would amplify solver residuals past the
# verification tolerance; the polished solution instead carries a uniform
# margin of exactly delta.
MARGIN_SLACK = 1e-4


def _zeros(r, c):
    return aff(shape=(r, c))


# ---------------------------------------------------------------------------
# Token bucket LMIs
# ---------------------------------------------------------------------------

def build_tb_lmis(p: TokenBucketParams, ellipsoid=False, alpha=1.0) -> SemidefiniteProgram:
    """Assemble the decrease LMIs for the token bucket terminal ingredients.

    One 4x4-strip block couples the transmission phase (X_0 -> X_1 under the
    gain variable Y); M-1 further 3x3-strip blocks cover the held phases.
    With ``ellipsoid`` set, containment blocks for the level sets
    {z : z'P_j z <= alpha} inside X_p x U_p are appended for the given alpha.
    """
    M, n_p, m_p, nz = p.M, p.n_p, p.m_p, p.n_z
    Qinv = inverse_pd(p.Q, what="Q")
    Rinv = inverse_pd(p.R, what="R")
    A_t, B_t, A_h = p.A_tilde(), p.B_tilde(), p.A_hold()
    I_nz = np.eye(nz)
    E_x = np.hstack([np.eye(n_p), np.zeros((n_p, m_p))])

    variables = [MatrixShape(f"X{j}", nz, nz, symmetric=True, strictly_positive=True)
                 for j in range(M)]
    variables.append(MatrixShape("Y", m_p, nz))

    blocks = []
    tx = [
        [aff(terms=[term(I_nz, f"X{1 % M}", I_nz)]), _zeros(nz, n_p), _zeros(nz, m_p),
         aff(terms=[term(A_t, "X0", I_nz), term(B_t, "Y", I_nz)])],
        [None, aff(const=Qinv), _zeros(n_p, m_p), aff(terms=[term(E_x, "X0", I_nz)])],
        [None, None, aff(const=Rinv), aff(terms=[term(np.eye(m_p), "Y", I_nz)])],
        [None, None, None, aff(terms=[term(I_nz, "X0", I_nz)])],
    ]
    blocks.append(BlockConstraint.from_upper(tx, name="decrease[0]"))

    QRinv = scipy.linalg.block_diag(Qinv, Rinv)
    for j in range(1, M):
        hold = [
            [aff(terms=[term(I_nz, f"X{(j + 1) % M}", I_nz)]), _zeros(nz, nz),
             aff(terms=[term(A_h, f"X{j}", I_nz)])],
            [None, aff(const=QRinv), aff(terms=[term(I_nz, f"X{j}", I_nz)])],
            [None, None, aff(terms=[term(I_nz, f"X{j}", I_nz)])],
        ]
        blocks.append(BlockConstraint.from_upper(hold, name=f"decrease[{j}]"))

    cost_eigs = np.concatenate([np.linalg.eigvalsh(p.Q), np.linalg.eigvalsh(p.R)])
    cap = X0_CAP_FACTOR / float(np.min(cost_eigs))
    blocks.append(BlockConstraint.from_upper(
        [[aff(const=cap * I_nz, terms=[term(-I_nz, "X0", I_nz)])]], name="cap[X0]"))

    if ellipsoid:
        if alpha <= 0:
            raise ValueError("ellipsoid level alpha must be positive")
        # Containment blocks in the congruence-scaled form
        # [[1, sqrt(a) c X], [sqrt(a) X c', X]] >= 0, identical to the
        # 1/alpha variant but conditioned uniformly in alpha.
        sq = float(np.sqrt(alpha))
        box_rows = []
        for c in p.X_p.rows:
            box_rows.append(np.hstack([c, np.zeros(m_p)]).reshape(1, nz))
        for d in p.U_p.rows:
            box_rows.append(np.hstack([np.zeros(n_p), d]).reshape(1, nz))
        one = np.eye(1)
        for j in range(M):
            for i, row in enumerate(box_rows):
                blk = [
                    [aff(const=one), aff(terms=[term(sq * row, f"X{j}", I_nz)])],
                    [None, aff(terms=[term(I_nz, f"X{j}", I_nz)])],
                ]
                blocks.append(BlockConstraint.from_upper(blk, name=f"contain[{j},{i}]"))
        for i, d in enumerate(p.U_p.rows):
            blk = [
                [aff(const=one), aff(terms=[term(sq * d.reshape(1, m_p), "Y", I_nz)])],
                [None, aff(terms=[term(I_nz, "X0", I_nz)])],
            ]
            blocks.append(BlockConstraint.from_upper(blk, name=f"gain_contain[{i}]"))

    objective = tuple((f"X{j}", np.eye(nz)) for j in range(M))
    return SemidefiniteProgram(variables=tuple(variables), blocks=tuple(blocks),
                               objective=objective)


def verify_tb(cost_matrices, K, p: TokenBucketParams):
    """Eigenvalue margins of the condensed decrease inequalities.

    Entry 0 covers the transmission phase, entries 1..M-1 the held phases;
    all margins must be >= -1e-6 for the certificate to stand.  This path is
    deliberately independent of the SDP solver.
    """
    M, n_p, m_p = p.M, p.n_p, p.m_p
    P = [symmetrize(as_matrix(Pj)) for Pj in cost_matrices]
    K = as_matrix(K, rows=m_p, cols=p.n_z)
    A_cl = p.A_closed(K)
    A_h = p.A_hold()
    C_tx = scipy.linalg.block_diag(p.Q, np.zeros((m_p, m_p))) + K.T @ p.R @ K
    C_hold = scipy.linalg.block_diag(p.Q, p.R)
    # The assembled left-hand sides are symmetric in exact arithmetic but are
    # small differences of large congruence products; symmetrize the float
    # noise away before the eigenvalue call.
    margins = [min_eigenvalue(symmetrize(-(A_cl.T @ P[1 % M] @ A_cl - P[0] + C_tx)))]
    for j in range(1, M):
        lhs = A_h.T @ P[(j + 1) % M] @ A_h - P[j] + C_hold
        margins.append(min_eigenvalue(symmetrize(-lhs)))
    return margins


def _tb_cycle(p: TokenBucketParams, K):
    """Phase maps and true stage-cost matrices of the closed terminal cycle."""
    maps = [p.A_closed(K)] + [p.A_hold()] * (p.M - 1)
    C_tx = scipy.linalg.block_diag(p.Q, np.zeros((p.m_p, p.m_p))) + K.T @ p.R @ K
    costs = [C_tx] + [scipy.linalg.block_diag(p.Q, p.R)] * (p.M - 1)
    return maps, costs


def _act_cycle(p: ActuatorParams, gains):
    maps, costs = [], []
    for j in range(p.M):
        sigma = p.base_schedule[j]
        omega = act_omega(sigma, p.widths)
        pi = act_pi(sigma, p.widths)
        K = as_matrix(gains[j], rows=p.m_p, cols=p.n_p)
        maps.append(p.A + p.B @ omega @ K)
        costs.append(p.Q + K.T @ pi.T @ p.R_blocks[sigma] @ pi @ K)
    return maps, costs


def periodic_lyapunov(maps, costs, delta):
    """Exact solution of P_j = A_j' P_{j+1} A_j + C_j + delta*I around the cycle.

    Requires the monodromy map (the product of the phase maps) to be strictly
    stable; the returned matrices then satisfy every decrease inequality with
    uniform margin delta, independent of any SDP solver residual.
    """
    M = len(maps)
    n = maps[0].shape[0]
    monodromy = np.eye(n)
    for A_j in maps:
        monodromy = A_j @ monodromy
    rho = spectral_radius(monodromy)
    if rho >= 1.0 - 1e-9:
        raise SolverError(f"periodic closed loop is not strictly stable (rho = {rho:.6f})")
    # Accumulated cost seen from phase 0: sum_j G_j' (C_j + delta I) G_j with
    # G_j the transition from phase 0 to phase j.
    acc = np.zeros((n, n))
    G = np.eye(n)
    for j in range(M):
        acc += G.T @ (costs[j] + delta * np.eye(n)) @ G
        G = maps[j] @ G
    P = [None] * M
    P[0] = symmetrize(scipy.linalg.solve_discrete_lyapunov(monodromy.T, symmetrize(acc)))
    for j in range(M - 1, 0, -1):
        P[j] = symmetrize(maps[j].T @ P[(j + 1) % M] @ maps[j] + costs[j] + delta * np.eye(n))
    return tuple(P)


def _margin_delta(p):
    if isinstance(p, TokenBucketParams):
        eigs = np.concatenate([np.linalg.eigvalsh(p.Q), np.linalg.eigvalsh(p.R)])
    else:
        eigs = np.linalg.eigvalsh(p.Q)
    return MARGIN_SLACK * float(np.min(eigs))


def _bisect_alpha(feasible, lo, hi, rel_tol=ALPHA_REL_TOL, max_iter=60):
    """Largest feasible alpha by bisection; ``lo`` must already be feasible."""
    for _ in range(max_iter):
        if (hi - lo) <= rel_tol * max(lo, 1e-12):
            break
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(eq=False)
class SynthesisCertificate:
    """Offline product consumed by the online MPC: ingredients plus evidence."""

    kind: str  # token_bucket | actuator
    ingredients: PeriodicTerminalIngredients
    margins: tuple
    sdp_block_margins: tuple
    region_mode: str
    params_hash: str

    @property
    def passed(self):
        return all(m >= -MARGIN_TOL for m in self.margins)

    def to_dict(self):
        ing = self.ingredients
        d = {
            "kind": self.kind,
            "region_mode": self.region_mode,
            "params_hash": self.params_hash,
            "M": ing.M,
            "cost_matrices": [Pj.tolist() for Pj in ing.cost_matrices],
            "margins": [float(m) for m in self.margins],
            "sdp_block_margins": [float(m) for m in self.sdp_block_margins],
        }
        if ing.gain is not None:
            d["gain"] = ing.gain.tolist()
        if ing.gains is not None:
            d["gains"] = [K.tolist() for K in ing.gains]
        if isinstance(ing.regions, PolytopicRegions):
            d["regions"] = {"type": "polytopic", **ing.regions.family.to_dict()}
        elif isinstance(ing.regions, EllipsoidRegions):
            d["regions"] = {"type": "ellipsoidal", "alpha": float(ing.regions.alpha)}
        else:
            d["regions"] = {"type": "unbounded"}
        return d

    @staticmethod
    def from_dict(d):
        rtype = d["regions"]["type"]
        if rtype == "polytopic":
            regions = PolytopicRegions(PeriodicPolytopeFamily.from_dict(d["regions"]))
        elif rtype == "ellipsoidal":
            regions = EllipsoidRegions(alpha=float(d["regions"]["alpha"]))
        elif rtype == "unbounded":
            regions = UnboundedRegions()
        else:
            raise ValueError(f"unknown region type {rtype}")
        ing = PeriodicTerminalIngredients(
            cost_matrices=tuple(np.asarray(Pj, dtype=float) for Pj in d["cost_matrices"]),
            regions=regions,
            gain=np.asarray(d["gain"], dtype=float) if "gain" in d else None,
            gains=tuple(np.asarray(K, dtype=float) for K in d["gains"]) if "gains" in d else None,
        )
        return SynthesisCertificate(
            kind=d["kind"],
            ingredients=ing,
            margins=tuple(float(m) for m in d["margins"]),
            sdp_block_margins=tuple(float(m) for m in d["sdp_block_margins"]),
            region_mode=d["region_mode"],
            params_hash=d["params_hash"],
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @staticmethod
    def load(path):
        with open(path) as fh:
            return SynthesisCertificate.from_dict(json.load(fh))


def params_fingerprint(p) -> str:
    """Stable hash binding a certificate to the model it was synthesized for."""
    if isinstance(p, TokenBucketParams):
        payload = {
            "kind": "token_bucket",
            "A": p.A.tolist(), "B": p.B.tolist(),
            "Q": p.Q.tolist(), "R": p.R.tolist(),
            "g": p.g, "c": p.c, "b": p.b,
            "X_p": p.X_p.to_dict(), "U_p": p.U_p.to_dict(),
        }
    elif isinstance(p, ActuatorParams):
        payload = {
            "kind": "actuator",
            "A": p.A.tolist(), "B": p.B.tolist(), "Q": p.Q.tolist(),
            "R_blocks": [Rb.tolist() for Rb in p.R_blocks],
            "widths": list(p.widths), "base_schedule": list(p.base_schedule),
        }
    else:
        raise TypeError(f"unsupported params type {type(p)}")
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _tb_recover(p: TokenBucketParams, res):
    """Gain from the SDP solution, cost matrices from the exact Lyapunov polish.

    Inverting the (boundary-hugging) SDP iterate amplifies solver residuals
    beyond the verification tolerance, so only the gain K = Y X_0^{-1} is
    taken from the solver; the P_j are then the exact accumulated-cost
    solution for that gain, which carries a uniform decrease margin.
    """
    K = res.values["Y"] @ inverse_pd(res.values["X0"], what="X_0")
    maps, costs = _tb_cycle(p, K)
    P = periodic_lyapunov(maps, costs, _margin_delta(p))
    return K, P


def _tb_ellipsoid_containment_ok(p: TokenBucketParams, P, K, alpha, tol=1e-9):
    """Closed-form check that every level set {z'P_j z <= alpha} obeys the box
    and that the transmitted input K z stays in U_p on Z_0."""
    box = p.constraint_box()
    for Pj in P:
        Pinv = np.linalg.inv(Pj)
        if any(alpha * float(r @ Pinv @ r) > 1.0 + tol for r in box.rows):
            return False
    P0inv = np.linalg.inv(P[0])
    for d in p.U_p.rows:
        dK = d @ K
        if alpha * float(dK @ P0inv @ dK) > 1.0 + tol:
            return False
    return True


def synthesize_tb(p: TokenBucketParams, region_mode="polytopic",
                  invariant_max_iter=200) -> SynthesisCertificate:
    """Solve the token bucket LMIs, recover (P_j, K), build and verify regions."""
    if region_mode not in ("polytopic", "ellipsoidal"):
        raise ValueError("region_mode must be 'polytopic' or 'ellipsoidal'")

    base = solve_sdp(build_tb_lmis(p, ellipsoid=False))
    if not base.feasible:
        raise SdpInfeasible("token bucket decrease LMIs are infeasible")

    if region_mode == "ellipsoidal":
        trials = {}

        def feasible(alpha):
            try:
                res = solve_sdp(build_tb_lmis(p, ellipsoid=True, alpha=alpha))
                if not res.feasible:
                    return False
                K_t, P_t = _tb_recover(p, res)
            except SolverError:
                return False
            if any(m < -MARGIN_TOL for m in verify_tb(P_t, K_t, p)):
                return False
            if not _tb_ellipsoid_containment_ok(p, P_t, K_t, alpha):
                return False
            trials[alpha] = (K_t, P_t, res)
            return True

        # Bracket around the closed-form level of the base solution; the
        # per-trial containment is checked against the (scale-pinned)
        # polished cost matrices, so the achievable level is of this order.
        K_b, P_b = _tb_recover(p, base)
        box = p.constraint_box()
        reach = max(float(r @ np.linalg.inv(Pj) @ r)
                    for Pj in P_b for r in box.rows)
        hint = 1.0 / reach if reach > 0 else 1.0
        lo, hi = 0.0, hint
        if feasible(hi):
            lo = hi
            for _ in range(40):
                hi = 2.0 * lo
                if not feasible(hi):
                    break
                lo = hi
        else:
            for _ in range(40):
                hi = hi / 2.0
                if feasible(hi):
                    lo = hi
                    break
            if lo == 0.0:
                raise SdpInfeasible("no positive ellipsoid level is feasible")
            hi = 2.0 * lo
        alpha = _bisect_alpha(feasible, lo, hi)
        K, cost_matrices, res = trials[alpha]
        regions = EllipsoidRegions(alpha=alpha)
    else:
        res = base
        K, cost_matrices = _tb_recover(p, res)
        regions = None

    margins = verify_tb(cost_matrices, K, p)
    bad = [j for j, m in enumerate(margins) if m < -MARGIN_TOL]
    if bad:
        raise VerificationFailed(bad[0], f"decrease inequality {bad[0]} has margin {margins[bad[0]]:.3e}")

    if region_mode == "polytopic":
        regions = _build_tb_polytopic_regions(p, K, invariant_max_iter)
    elif not _tb_ellipsoid_containment_ok(p, cost_matrices, K, regions.alpha):
        raise VerificationFailed(0, "ellipsoidal regions leave the constraint box")

    ing = PeriodicTerminalIngredients(cost_matrices=cost_matrices, regions=regions, gain=K)
    return SynthesisCertificate(
        kind="token_bucket",
        ingredients=ing,
        margins=tuple(margins),
        sdp_block_margins=tuple(res.block_margins),
        region_mode=region_mode,
        params_hash=params_fingerprint(p),
    )


def _build_tb_polytopic_regions(p: TokenBucketParams, K, max_iter):
    A_cl = p.A_closed(K)
    A_h = p.A_hold()
    box = p.constraint_box()
    monodromy = np.linalg.matrix_power(A_h, p.M - 1) @ A_cl
    Z = max_invariant_polytope(monodromy, box, max_iter=max_iter)
    maps = [np.linalg.matrix_power(A_h, j - 1) @ A_cl for j in range(1, p.M)]
    alpha_star = max_scaling(maps, Z, box) if maps else 1.0
    family = build_periodic_family(Z, alpha_star, A_cl, A_h, p.M)
    verify_family(family, A_cl, A_h, box=box)
    return PolytopicRegions(family)


# ---------------------------------------------------------------------------
# Actuator scheduling LMIs
# ---------------------------------------------------------------------------

def build_act_lmis(p: ActuatorParams) -> SemidefiniteProgram:
    """One decrease LMI per phase of the base schedule."""
    M, n_p = p.M, p.n_p
    Qinv = inverse_pd(p.Q, what="Q")
    I_n = np.eye(n_p)

    variables = [MatrixShape(f"X{j}", n_p, n_p, symmetric=True, strictly_positive=True)
                 for j in range(M)]
    variables += [MatrixShape(f"Y{j}", p.m_p, n_p) for j in range(M)]

    blocks = []
    for j in range(M):
        sigma = p.base_schedule[j]
        omega = act_omega(sigma, p.widths)
        pi = act_pi(sigma, p.widths)
        Rinv = inverse_pd(p.R_blocks[sigma], what=f"R_{sigma}")
        w = p.widths[sigma]
        blk = [
            [aff(terms=[term(I_n, f"X{(j + 1) % M}", I_n)]), _zeros(n_p, n_p),
             _zeros(n_p, w),
             aff(terms=[term(p.A, f"X{j}", I_n), term(p.B @ omega, f"Y{j}", I_n)])],
            [None, aff(const=Qinv), _zeros(n_p, w),
             aff(terms=[term(I_n, f"X{j}", I_n)])],
            [None, None, aff(const=Rinv), aff(terms=[term(pi, f"Y{j}", I_n)])],
            [None, None, None, aff(terms=[term(I_n, f"X{j}", I_n)])],
        ]
        blocks.append(BlockConstraint.from_upper(blk, name=f"decrease[{j}]"))

    objective = tuple((f"X{j}", np.eye(n_p)) for j in range(M))
    return SemidefiniteProgram(variables=tuple(variables), blocks=tuple(blocks),
                               objective=objective)


def verify_act(cost_matrices, gains, p: ActuatorParams):
    """Condensed decrease margins for the actuator scheduling certificate."""
    M = p.M
    P = [symmetrize(as_matrix(Pj)) for Pj in cost_matrices]
    margins = []
    for j in range(M):
        sigma = p.base_schedule[j]
        omega = act_omega(sigma, p.widths)
        pi = act_pi(sigma, p.widths)
        K = as_matrix(gains[j], rows=p.m_p, cols=p.n_p)
        A_cl = p.A + p.B @ omega @ K
        cost = p.Q + K.T @ pi.T @ p.R_blocks[sigma] @ pi @ K
        lhs = A_cl.T @ P[(j + 1) % M] @ A_cl - P[j] + cost
        margins.append(min_eigenvalue(symmetrize(-lhs)))
    return margins


def synthesize_act(p: ActuatorParams) -> SynthesisCertificate:
    """Solve the actuator scheduling LMIs; terminal regions are all of state space."""
    res = solve_sdp(build_act_lmis(p))
    if not res.feasible:
        raise SdpInfeasible("actuator scheduling decrease LMIs are infeasible")
    gains = tuple(res.values[f"Y{j}"] @ inverse_pd(res.values[f"X{j}"], what=f"X_{j}")
                  for j in range(p.M))
    maps, costs = _act_cycle(p, gains)
    cost_matrices = periodic_lyapunov(maps, costs, _margin_delta(p))
    margins = verify_act(cost_matrices, gains, p)
    bad = [j for j, m in enumerate(margins) if m < -MARGIN_TOL]
    if bad:
        raise VerificationFailed(bad[0], f"decrease inequality {bad[0]} has margin {margins[bad[0]]:.3e}")
    ing = PeriodicTerminalIngredients(cost_matrices=cost_matrices,
                                      regions=UnboundedRegions(), gains=gains)
    return SynthesisCertificate(
        kind="actuator",
        ingredients=ing,
        margins=tuple(margins),
        sdp_block_margins=tuple(res.block_margins),
        region_mode="unbounded",
        params_hash=params_fingerprint(p),
    )
