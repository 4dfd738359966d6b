"""Reference implementations that share no code with the package.

Each oracle recomputes a quantity from first principles (exact rationals,
brute-force enumeration, explicit trajectory rollout) so tests can compare
the package against something independent.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

# ---------------------------------------------------------------------------
# fixed point


def exact_round(x: Fraction) -> int:
    """Round a rational to the nearest integer, ties away from zero."""
    sign = -1 if x < 0 else 1
    a = abs(x)
    n = math.floor(a)
    if a - n >= Fraction(1, 2):
        n += 1
    return sign * n


def exact_quantize(x, p: int) -> Fraction:
    """Nearest multiple of 2**-p to ``x`` (no range handling)."""
    step = Fraction(1, 2**p)
    return exact_round(Fraction(x) / step) * step


def exact_dot(xs, ys) -> Fraction:
    return sum((Fraction(a) * Fraction(b) for a, b in zip(xs, ys)), Fraction(0))


# ---------------------------------------------------------------------------
# linear-quadratic


def kkt_solve(H, h, D, d, active):
    """Solve the equality-constrained QP on ``active`` rows; None if singular."""
    n = H.shape[0]
    k = len(active)
    K = np.zeros((n + k, n + k))
    K[:n, :n] = H
    rhs = np.zeros(n + k)
    rhs[:n] = -h
    if k:
        Da = D[list(active)]
        K[:n, n:] = Da.T
        K[n:, :n] = Da
        rhs[n:] = d[list(active)]
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    return sol[:n], sol[n:]


def active_set_enumeration(H, h, D, d, max_active=None, tol=1e-9):
    """Exact QP solution by enumerating candidate active sets.

    Subsets are visited in order of increasing size; the first one whose
    equality-constrained solution is primal feasible with nonnegative
    multipliers satisfies the KKT conditions, which for a strictly convex QP
    identify the unique optimum.  Returns ``(z, y, active)``.
    """
    H = np.asarray(H, dtype=float)
    D = np.asarray(D, dtype=float).reshape(-1, H.shape[0])
    h = np.asarray(h, dtype=float)
    d = np.asarray(d, dtype=float)
    m, n = D.shape
    kmax = min(n, m) if max_active is None else min(max_active, n, m)
    scale = 1.0 + np.abs(d).max(initial=0.0)
    for k in range(kmax + 1):
        for active in itertools.combinations(range(m), k):
            sol = kkt_solve(H, h, D, d, active)
            if sol is None:
                continue
            z, lam = sol
            if np.any(lam < -tol * (1.0 + np.abs(lam).max(initial=0.0))):
                continue
            if np.any(D @ z - d > tol * scale):
                continue
            y = np.zeros(m)
            y[list(active)] = np.maximum(lam, 0.0)
            return z, y, active
    raise ValueError("no KKT point among the enumerated active sets")


def planted_qp(rng, n, m, n_active, cond=50.0):
    """Random strictly convex QP with a known nondegenerate solution.

    Picks ``z*``, an active set of ``n_active`` rows with positive
    multipliers, and strictly positive slack on the remaining rows, then
    solves for ``h`` and ``d`` so that ``(z*, y*)`` satisfies KKT.
    """
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.exp(rng.uniform(0.0, math.log(cond), n))
    H = Q @ np.diag(eig) @ Q.T
    H = 0.5 * (H + H.T)
    D = rng.standard_normal((m, n))
    z = rng.standard_normal(n)
    active = rng.choice(m, size=n_active, replace=False)
    y = np.zeros(m)
    y[active] = rng.uniform(0.1, 2.0, n_active)
    slack = rng.uniform(0.1, 2.0, m)
    slack[active] = 0.0
    d = D @ z + slack
    h = -H @ z - D.T @ y
    return H, h, D, d, z, y


def qp_value(H, h, z) -> float:
    return float(0.5 * z @ H @ z + h @ z)


def dual_value(H, h, D, d, y) -> float:
    """Lagrange dual function min_z 1/2 z'Hz + h'z + y'(Dz - d)."""
    q = h + D.T @ y
    return float(-0.5 * q @ np.linalg.solve(H, q) - d @ y)


# ---------------------------------------------------------------------------
# MPC


def rollout_cost(A, B, Q1, Q2, R, Pf, N, Nc, z, x0, r_tilde, u_prev, virtual=True):
    """Cost of the modified MPC problem by explicit simulation.

    ``z = (du_0..du_{Nc-1}, xv_0..xv_{Nc-1})``; inputs are held after the
    control horizon and the last virtual offset is reused.
    """
    nu = B.shape[1]
    nx = A.shape[0]
    du = [z[nu * k:nu * (k + 1)] for k in range(Nc)]
    if virtual:
        base = nu * Nc
        xv = [z[base + nx * k:base + nx * (k + 1)] for k in range(Nc)]
    else:
        xv = [np.zeros(nx)] * Nc
    x = np.array(x0, dtype=float)
    u = np.array(u_prev, dtype=float)
    J = 0.0
    for k in range(N):
        if k < Nc:
            u = u + du[k]
            J += du[k] @ R @ du[k]
        v = xv[min(k, Nc - 1)]
        e = x - v - r_tilde
        J += e @ Q1 @ e
        if virtual:
            J += v @ Q2 @ v
        x = A @ x + B @ u
    e = x - r_tilde
    return float(J + e @ Pf @ e)


def standard_tracking_qp(A, B, Q, R, Pf, N, Nc, x0, r_tilde, u_prev, u_max):
    """Dense QP of plain tracking MPC on input increments, built from scratch.

    Returns ``(H, h, D, d)`` over ``du_0..du_{Nc-1}`` with input bounds on
    ``u_0..u_{Nc-1}``.
    """
    nx, nu = B.shape
    nz = nu * Nc
    # u_k = u_prev + S_k du,  x_k = Phi_k x0 + Gam_k du + Ups_k u_prev
    S = []
    for k in range(N):
        Sk = np.zeros((nu, nz))
        for j in range(min(k, Nc - 1) + 1):
            Sk[:, nu * j:nu * (j + 1)] = np.eye(nu)
        S.append(Sk)
    X_du = [np.zeros((nx, nz))]
    X_c = [np.array(x0, dtype=float)]
    for k in range(N):
        X_du.append(A @ X_du[-1] + B @ S[k])
        X_c.append(A @ X_c[-1] + B @ u_prev)
    H = np.zeros((nz, nz))
    h = np.zeros(nz)
    for k in range(N + 1):
        W = Pf if k == N else Q
        H += 2 * X_du[k].T @ W @ X_du[k]
        h += 2 * X_du[k].T @ W @ (X_c[k] - r_tilde)
    for k in range(Nc):
        Sel = np.zeros((nu, nz))
        Sel[:, nu * k:nu * (k + 1)] = np.eye(nu)
        H += 2 * Sel.T @ R @ Sel
    rows, rhs = [], []
    for k in range(Nc):
        for i in range(nu):
            rows.append(S[k][i])
            rhs.append(u_max - u_prev[i])
            rows.append(-S[k][i])
            rhs.append(u_max + u_prev[i])
    return H, h, np.array(rows), np.array(rhs)
