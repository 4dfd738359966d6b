"""Modified tracking MPC with virtual state variables, condensed to a dense QP.

Decision vector ``z = (du_0, ..., du_{Nc-1}, xv_0, ..., xv_{Nc-1})`` where
``du_k`` are input increments and ``xv_k`` the virtual state offsets.  Both
are blocked beyond the control horizon: inputs are held (``du_k = 0``) and
``xv_k = xv_{Nc-1}`` for ``k >= Nc``.  The per-sample cost is

    |x_N - r|^2_Pf + sum_k |x_k - xv_k - r|^2_Q1 + |xv_k|^2_Q2 + |du_k|^2_R

With ``virtual=False`` the ``xv`` block is dropped and this is ordinary
tracking MPC on input increments.

All parameter-dependent data are affine in ``p = (x(t), r_tilde, u(t-1))``
(15 entries), so :func:`condense` precomputes the maps once and
:func:`update_qp_vectors` only does two small matrix-vector products online.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .control_model import DiscreteModel
from .errors import ConvergenceError, DimensionError

__all__ = [
    "MpcConfig",
    "ConstraintSpec",
    "CondensedQp",
    "ReferenceGovernor",
    "terminal_weight_dare",
    "default_weights",
    "condense",
    "update_qp_vectors",
    "lift_reference",
    "extract_control",
]

NX, NU = 6, 3
NP = NX + NX + NU


def default_weights():
    """Default stage weights (Q1, Q2, R)."""
    Q1 = np.diag([100.0, 100.0, 100.0, 0.1, 0.1, 0.1])
    Q2 = 50.0 * np.eye(NX)
    R = 0.01 * np.eye(NU)
    return Q1, Q2, R


@dataclass(frozen=True)
class MpcConfig:
    N: int
    Nc: int
    Q1: np.ndarray
    Q2: np.ndarray
    R: np.ndarray
    Pf: np.ndarray
    Ts: float
    virtual: bool = True

    def __post_init__(self):
        if not (1 <= self.Nc <= self.N):
            raise ValueError(f"need 1 <= Nc <= N, got Nc={self.Nc}, N={self.N}")
        for name, M, dim in (("Q1", self.Q1, NX), ("Q2", self.Q2, NX), ("R", self.R, NU), ("Pf", self.Pf, NX)):
            M = np.asarray(M, dtype=float)
            if M.shape != (dim, dim):
                raise DimensionError(f"{name} must be {dim}x{dim}, got {M.shape}")
            if not np.allclose(M, M.T, rtol=0, atol=1e-9 * max(1.0, np.abs(M).max())):
                raise ValueError(f"{name} is not symmetric")
            object.__setattr__(self, name, M)
        if np.linalg.eigvalsh(self.R).min() <= 0:
            raise ValueError("R must be positive definite")

    @property
    def n(self) -> int:
        return (NU + NX) * self.Nc if self.virtual else NU * self.Nc

    @classmethod
    def default(cls, model: DiscreteModel, N: int = 10, Nc: int = 2, virtual: bool = True) -> "MpcConfig":
        Q1, Q2, R = default_weights()
        Pf = terminal_weight_dare(model, Q1, R)
        return cls(N=N, Nc=Nc, Q1=Q1, Q2=Q2, R=R, Pf=Pf, Ts=model.Ts, virtual=virtual)


@dataclass(frozen=True)
class ConstraintSpec:
    """Bounds ``z_lo <= Cc x_k + Dc u_k <= z_hi`` plus optional increment bounds.

    ``horizon[i]`` is ``"control"`` (row enforced for ``k < Nc``) or
    ``"prediction"`` (enforced for ``k < N``).  Increment bounds
    ``du_lo <= du_k <= du_hi`` always span the control horizon.
    """

    Cc: np.ndarray
    Dc: np.ndarray
    z_lo: np.ndarray
    z_hi: np.ndarray
    horizon: tuple[str, ...]
    du_lo: Optional[np.ndarray] = None
    du_hi: Optional[np.ndarray] = None

    def __post_init__(self):
        Cc = np.atleast_2d(np.asarray(self.Cc, dtype=float)).reshape(-1, NX)
        Dc = np.atleast_2d(np.asarray(self.Dc, dtype=float)).reshape(-1, NU)
        lo = np.asarray(self.z_lo, dtype=float).ravel()
        hi = np.asarray(self.z_hi, dtype=float).ravel()
        k = Cc.shape[0]
        if Dc.shape[0] != k or lo.size != k or hi.size != k or len(self.horizon) != k:
            raise DimensionError("constraint rows disagree in count")
        if np.any(lo > hi):
            raise ValueError("z_lo must not exceed z_hi")
        if any(h not in ("control", "prediction") for h in self.horizon):
            raise ValueError(f"unknown horizon tag in {self.horizon}")
        object.__setattr__(self, "Cc", Cc)
        object.__setattr__(self, "Dc", Dc)
        object.__setattr__(self, "z_lo", lo)
        object.__setattr__(self, "z_hi", hi)
        object.__setattr__(self, "horizon", tuple(self.horizon))
        if (self.du_lo is None) != (self.du_hi is None):
            raise ValueError("give both du_lo and du_hi or neither")
        if self.du_lo is not None:
            dlo = np.broadcast_to(np.asarray(self.du_lo, dtype=float), (NU,)).copy()
            dhi = np.broadcast_to(np.asarray(self.du_hi, dtype=float), (NU,)).copy()
            if np.any(dlo > dhi):
                raise ValueError("du_lo must not exceed du_hi")
            object.__setattr__(self, "du_lo", dlo)
            object.__setattr__(self, "du_hi", dhi)

    @classmethod
    def box(cls, u=1.0, du=None, attitude=None, wheel=None) -> "ConstraintSpec":
        """Symmetric box bounds; ``None`` leaves a group unconstrained."""
        Cc, Dc, lo, hi, hor = [], [], [], [], []
        if u is not None:
            ub = np.broadcast_to(np.asarray(u, dtype=float), (NU,))
            for i in range(NU):
                Cc.append(np.zeros(NX))
                Dc.append(np.eye(NU)[i])
                lo.append(-ub[i])
                hi.append(ub[i])
                hor.append("control")
        for bound, offset in ((attitude, 0), (wheel, 3)):
            if bound is None:
                continue
            b = np.broadcast_to(np.asarray(bound, dtype=float), (3,))
            for i in range(3):
                Cc.append(np.eye(NX)[offset + i])
                Dc.append(np.zeros(NU))
                lo.append(-b[i])
                hi.append(b[i])
                hor.append("prediction")
        du_lo = du_hi = None
        if du is not None:
            db = np.broadcast_to(np.asarray(du, dtype=float), (NU,))
            du_lo, du_hi = -db, db
        return cls(np.reshape(Cc, (-1, NX)), np.reshape(Dc, (-1, NU)), lo, hi, tuple(hor), du_lo, du_hi)

    def rows_per_step(self, horizon: str) -> int:
        return sum(h == horizon for h in self.horizon)

    def n_dual(self, N: int, Nc: int) -> int:
        m = 2 * (self.rows_per_step("control") * Nc + self.rows_per_step("prediction") * N)
        if self.du_lo is not None:
            m += 2 * NU * Nc
        return m


@dataclass(frozen=True)
class CondensedQp:
    """Dense QP ``min 1/2 z'Hz + h'z  s.t.  Dz <= d`` with affine parameter maps.

    ``h = h_map @ p`` and ``d = d0 + d_map @ p`` for ``p = (x, r_tilde, u_prev)``;
    ``c_map`` gives the z-independent part of the cost, ``p' c_map p``.
    """

    H: np.ndarray
    D: np.ndarray
    h_map: np.ndarray
    d0: np.ndarray
    d_map: np.ndarray
    c_map: np.ndarray
    config: MpcConfig
    constraints: ConstraintSpec

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def m(self) -> int:
        return self.D.shape[0]

    def objective(self, z, x, r_tilde, u_prev) -> float:
        """Full cost including the constant term, for checking against rollouts."""
        p = pack_parameters(x, r_tilde, u_prev)
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.H @ z + (self.h_map @ p) @ z + p @ self.c_map @ p)


@dataclass
class ReferenceGovernor:
    """External integrator that shifts the attitude reference to remove offsets.

    Integrates the attitude error with forward Euler; ``integral_gain`` = 1
    is the plain integral of the error.  The accumulated term is clamped to
    ``windup_limit`` per axis.
    """

    Ts: float
    integral_gain: float = 1.0
    windup_limit: np.ndarray = field(default_factory=lambda: np.full(3, 0.5))
    accumulated_error: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.windup_limit = np.broadcast_to(np.asarray(self.windup_limit, dtype=float), (3,)).copy()
        self.accumulated_error = np.asarray(self.accumulated_error, dtype=float).copy()
        if np.any(self.windup_limit < 0):
            raise ValueError("windup limit must be nonnegative")

    def update(self, attitude, r_bar) -> np.ndarray:
        r_bar = np.asarray(r_bar, dtype=float)
        self.accumulated_error = np.clip(
            self.accumulated_error + self.integral_gain * self.Ts * (np.asarray(attitude, dtype=float) - r_bar),
            -self.windup_limit,
            self.windup_limit,
        )
        return r_bar - self.accumulated_error

    def reset(self):
        self.accumulated_error = np.zeros(3)


def governor_update(g: ReferenceGovernor, attitude, r_bar) -> np.ndarray:
    return g.update(attitude, r_bar)


def terminal_weight_dare(model: DiscreteModel, Q, R, tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
    """Stabilizing solution of the discrete algebraic Riccati equation.

    Uses the structure-preserving doubling algorithm, which converges
    quadratically for stabilizable/detectable data.
    """
    A = np.asarray(model.A, dtype=float)
    B = np.asarray(model.B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    n = A.shape[0]
    I = np.eye(n)
    Ak = A.copy()
    G = B @ np.linalg.solve(R, B.T)
    P = Q.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(max_iter):
            W = I + G @ P
            try:
                AW = np.linalg.solve(W.T, Ak.T).T  # Ak @ inv(W)
                P_next = P + Ak.T @ P @ np.linalg.solve(W, Ak)
            except np.linalg.LinAlgError as exc:
                raise ConvergenceError(f"doubling iteration hit a singular matrix: {exc}") from exc
            G = G + AW @ G @ Ak.T
            Ak = AW @ Ak
            P_next = 0.5 * (P_next + P_next.T)
            if not np.all(np.isfinite(P_next)):
                raise ConvergenceError("doubling iteration diverged (no stabilizing solution?)")
            if np.abs(P_next - P).max() <= tol * max(1.0, np.abs(P_next).max()):
                return P_next
            P = P_next
    raise ConvergenceError(f"doubling iteration for the Riccati equation did not converge in {max_iter} steps")


def dare_residual(P, A, B, Q, R) -> np.ndarray:
    BtP = B.T @ P
    return A.T @ P @ A - P + Q - A.T @ P @ B @ np.linalg.solve(R + BtP @ B, BtP @ A)


def pack_parameters(x, r_tilde, u_prev) -> np.ndarray:
    p = np.concatenate([np.ravel(x), np.ravel(r_tilde), np.ravel(u_prev)]).astype(float)
    if p.size != NP:
        raise DimensionError(f"expected x (6), r_tilde (6), u_prev (3); got {p.size} values")
    return p


def _prediction_maps(model: DiscreteModel, N: int, Nc: int, n: int):
    """Affine maps of predicted inputs u_0..u_{N-1} and states x_0..x_N in (z, p)."""
    A, B = model.A, model.B
    U_z = np.zeros((N, NU, n))
    U_p = np.zeros((N, NU, NP))
    for k in range(N):
        U_p[k, :, 2 * NX:] = np.eye(NU)
        for j in range(min(k, Nc - 1) + 1):
            U_z[k, :, NU * j:NU * (j + 1)] += np.eye(NU)
    X_z = np.zeros((N + 1, NX, n))
    X_p = np.zeros((N + 1, NX, NP))
    X_p[0, :, :NX] = np.eye(NX)
    for k in range(N):
        X_z[k + 1] = A @ X_z[k] + B @ U_z[k]
        X_p[k + 1] = A @ X_p[k] + B @ U_p[k]
    return U_z, U_p, X_z, X_p


def condense(model: DiscreteModel, cfg: MpcConfig, cons: ConstraintSpec) -> CondensedQp:
    """Eliminate predicted states and build the dense QP and its parameter maps."""
    if model.A.shape != (NX, NX) or model.B.shape != (NX, NU):
        raise DimensionError(f"model must be 6-state/3-input, got A{model.A.shape}, B{model.B.shape}")
    N, Nc, n = cfg.N, cfg.Nc, cfg.n
    U_z, U_p, X_z, X_p = _prediction_maps(model, N, Nc, n)

    r_sel = np.zeros((NX, NP))
    r_sel[:, NX:2 * NX] = np.eye(NX)
    blocks = []  # (G, F, W): residual = G z + F p, weighted by W
    for k in range(N):
        Vk = np.zeros((NX, n))
        if cfg.virtual:
            j = NU * Nc + NX * min(k, Nc - 1)
            Vk[:, j:j + NX] = np.eye(NX)
            blocks.append((Vk, np.zeros((NX, NP)), cfg.Q2))
        blocks.append((X_z[k] - Vk, X_p[k] - r_sel, cfg.Q1))
        if k < Nc:
            Sk = np.zeros((NU, n))
            Sk[:, NU * k:NU * (k + 1)] = np.eye(NU)
            blocks.append((Sk, np.zeros((NU, NP)), cfg.R))
    blocks.append((X_z[N], X_p[N] - r_sel, cfg.Pf))

    H = np.zeros((n, n))
    h_map = np.zeros((n, NP))
    c_map = np.zeros((NP, NP))
    for G, F, W in blocks:
        GW = G.T @ W
        H += 2.0 * GW @ G
        h_map += 2.0 * GW @ F
        c_map += F.T @ W @ F
    H = 0.5 * (H + H.T)
    c_map = 0.5 * (c_map + c_map.T)
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError as exc:
        raise ValueError("condensed Hessian is not positive definite") from exc

    D_rows, d0, dmap_rows = [], [], []

    def add_pair(row_z, row_p, lo, hi):
        # lo <= row_z z + row_p p <= hi  ->  two rows of D z <= d0 + d_map p
        D_rows.append(row_z)
        d0.append(hi)
        dmap_rows.append(-row_p)
        D_rows.append(-row_z)
        d0.append(-lo)
        dmap_rows.append(row_p)

    ctrl = [i for i, h in enumerate(cons.horizon) if h == "control"]
    pred = [i for i, h in enumerate(cons.horizon) if h == "prediction"]
    for k in range(Nc):
        for i in ctrl:
            add_pair(cons.Cc[i] @ X_z[k] + cons.Dc[i] @ U_z[k],
                     cons.Cc[i] @ X_p[k] + cons.Dc[i] @ U_p[k],
                     cons.z_lo[i], cons.z_hi[i])
    if cons.du_lo is not None:
        for k in range(Nc):
            for i in range(NU):
                e = np.zeros(n)
                e[NU * k + i] = 1.0
                add_pair(e, np.zeros(NP), cons.du_lo[i], cons.du_hi[i])
    for k in range(N):
        for i in pred:
            add_pair(cons.Cc[i] @ X_z[k] + cons.Dc[i] @ U_z[k],
                     cons.Cc[i] @ X_p[k] + cons.Dc[i] @ U_p[k],
                     cons.z_lo[i], cons.z_hi[i])

    D = np.reshape(D_rows, (-1, n))
    return CondensedQp(
        H=H,
        D=D,
        h_map=h_map,
        d0=np.asarray(d0, dtype=float),
        d_map=np.reshape(dmap_rows, (-1, NP)),
        c_map=c_map,
        config=cfg,
        constraints=cons,
    )


def update_qp_vectors(qp: CondensedQp, x, r_tilde, u_prev):
    """Linear term ``h`` and constraint offset ``d`` for the current sample."""
    p = pack_parameters(x, r_tilde, u_prev)
    return qp.h_map @ p, qp.d0 + qp.d_map @ p


def lift_reference(r) -> np.ndarray:
    """Attitude reference to full model-state reference; wheel-speed targets are zero."""
    r = np.asarray(r, dtype=float).ravel()
    if r.size != 3:
        raise DimensionError(f"attitude reference must have 3 entries, got {r.size}")
    return np.concatenate([r, np.zeros(3)])


def extract_control(z_star, u_prev) -> np.ndarray:
    return np.asarray(u_prev, dtype=float) + np.asarray(z_star, dtype=float)[:NU]
