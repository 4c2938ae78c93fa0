"""Brute-force reference implementations used to cross-check the solvers.

Everything here is written against numpy only and deliberately avoids the
code paths it is meant to check: LPs are settled by vertex enumeration, QPs
by nested grid refinement, and the periodic decrease inequalities by a gain
grid search combined with an explicit vectorized Lyapunov solve.
"""

import itertools

import numpy as np


def lp_vertex_oracle(c, G, h):
    """Max c.x over {Gx <= h} in 2 variables by enumerating row intersections.

    Returns (value, vertex); assumes the feasible set is bounded and
    nonempty.
    """
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    best, best_x = -np.inf, None
    for i, j in itertools.combinations(range(G.shape[0]), 2):
        A = np.vstack([G[i], G[j]])
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        x = np.linalg.solve(A, np.array([h[i], h[j]]))
        if np.all(G @ x <= h + 1e-9):
            v = float(c @ x)
            if v > best:
                best, best_x = v, x
    return best, best_x


def qp_grid_oracle(H, f, G, h, constant=0.0, rounds=8, grid=21, span=10.0):
    """Min 0.5 x'Hx + f'x + c over {Gx <= h} in 2 variables by refined grids."""
    H = np.asarray(H, dtype=float)
    f = np.asarray(f, dtype=float)
    center = np.zeros(2)
    best, best_x = np.inf, None
    width = span
    for _ in range(rounds):
        xs = np.linspace(center[0] - width, center[0] + width, grid)
        ys = np.linspace(center[1] - width, center[1] + width, grid)
        for x0 in xs:
            for y0 in ys:
                x = np.array([x0, y0])
                if G is not None and np.any(G @ x > h + 1e-12):
                    continue
                v = 0.5 * x @ H @ x + f @ x + constant
                if v < best:
                    best, best_x = v, x
        if best_x is None:
            width *= 2.0
            continue
        center = best_x
        width = width * 2.2 / (grid - 1)
    return best, best_x


def _tb_lifted(A, B):
    n, m = A.shape[0], B.shape[1]
    At = np.zeros((n + m, n + m))
    At[:n, :n] = A
    Bt = np.vstack([B, np.eye(m)])
    Ah = np.zeros((n + m, n + m))
    Ah[:n, :n] = A
    Ah[:n, n:] = B
    Ah[n:, n:] = np.eye(m)
    return At, Bt, Ah


def tb_condensed_margins(A, B, Q, R, K, M, delta=1e-8):
    """Margins of the periodic decrease inequalities for a candidate gain.

    Solves the cycle of Lyapunov equalities with a +delta*I strengthening by
    explicit vectorization (no SDP, no scipy helper) and evaluates the true
    inequalities at the result.  Returns None if the candidate is not
    strictly stabilizing over one period.
    """
    n, m = A.shape[0], B.shape[1]
    nz = n + m
    At, Bt, Ah = _tb_lifted(A, B)
    Acl = At + Bt @ K
    maps = [Acl] + [Ah] * (M - 1)
    C_tx = np.zeros((nz, nz))
    C_tx[:n, :n] = Q
    C_tx += K.T @ R @ K
    C_hold = np.zeros((nz, nz))
    C_hold[:n, :n] = Q
    C_hold[n:, n:] = R
    costs = [C_tx] + [C_hold] * (M - 1)

    mono = np.eye(nz)
    for Aj in maps:
        mono = Aj @ mono
    if np.max(np.abs(np.linalg.eigvals(mono))) >= 1.0 - 1e-9:
        return None
    acc = np.zeros((nz, nz))
    G = np.eye(nz)
    for j in range(M):
        acc += G.T @ (costs[j] + delta * np.eye(nz)) @ G
        G = maps[j] @ G
    # vec(P0) solves (I - kron(mono', mono')) vec(P0) = vec(acc)
    lhs = np.eye(nz * nz) - np.kron(mono.T, mono.T)
    P0 = np.linalg.solve(lhs, acc.reshape(-1)).reshape(nz, nz)
    P = [0.5 * (P0 + P0.T)] + [None] * (M - 1)
    for j in range(M - 1, 0, -1):
        nxt = P[(j + 1) % M]
        Pj = maps[j].T @ nxt @ maps[j] + costs[j] + delta * np.eye(nz)
        P[j] = 0.5 * (Pj + Pj.T)
    margins = []
    for j in range(M):
        lhs_j = maps[j].T @ P[(j + 1) % M] @ maps[j] - P[j] + costs[j]
        margins.append(float(np.min(np.linalg.eigvalsh(-0.5 * (lhs_j + lhs_j.T)))))
    if any(np.min(np.linalg.eigvalsh(Pj)) <= 0 for Pj in P):
        return None
    return margins


def tb_feasibility_oracle(A, B, Q, R, M, rounds=4, grid=7, span=None):
    """Brute-force feasibility of the periodic decrease inequalities.

    Grid search with local refinement over the transmission gain, scoring
    candidates by the spectral radius of the one-period closed loop; feasible
    iff some refined candidate admits the explicit Lyapunov construction.
    """
    n, m = A.shape[0], B.shape[1]
    nz = n + m
    At, Bt, Ah = _tb_lifted(A, B)
    AhM = np.linalg.matrix_power(Ah, M - 1)

    def rho(Kflat):
        K = Kflat.reshape(m, nz)
        return np.max(np.abs(np.linalg.eigvals(AhM @ (At + Bt @ K))))

    if span is None:
        span = 2.0 * (1.0 + np.max(np.abs(A))) * (1.0 + np.max(np.abs(B)))
    center = np.zeros(m * nz)
    best, best_K = rho(center), center
    width = span
    for _ in range(rounds):
        axes = [np.linspace(ci - width, ci + width, grid) for ci in center]
        for point in itertools.product(*axes):
            r = rho(np.asarray(point))
            if r < best:
                best, best_K = r, np.asarray(point)
        center = best_K
        width = width * 2.2 / (grid - 1)
    if best >= 1.0 - 1e-9:
        return False
    margins = tb_condensed_margins(A, B, Q, R, best_K.reshape(m, nz), M)
    return margins is not None and all(mg > 0 for mg in margins)
