"""Dual gradient projection for condensed MPC QPs, in float64 or fixed point.

Each iteration is

    z   = M1 y + m2                 M1 = -H^-1 D',  m2 = -H^-1 h
    y+  = max(0, y + (D/L) z - d/L)

so the online work is two matrix-vector products and a projection.  All
divisions (by ``L`` and through ``H^-1``) happen once, in double precision,
when the solver is built or when a new ``h``/``d`` pair arrives.  The
iteration itself goes through an arithmetic backend: :class:`Float64Backend`
or :class:`FixedBackend`, which routes every multiply and add through the
Q-format kernels in :mod:`fxmpc.fixed_point`.

Before encoding, the problem is equilibrated: constraint rows are scaled so
``D H^-1 D'`` has unit diagonal, and primal variables are scaled so the
largest entries of ``M1`` and ``D/L`` match.  In fixed point, ``h`` and ``d``
are also multiplied by a power of two so the iterates use the integer range
instead of sitting a few LSBs above zero.  All three are exact
reformulations; reported ``z`` and ``y`` are always in the caller's units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import fixed_point as fx
from .errors import ConvergenceError, DimensionError, MaxItersExceeded
from .fixed_point import FixedFormat, FixedPointOverflow

__all__ = [
    "SolverConfig",
    "SolverResult",
    "Float64Backend",
    "FixedBackend",
    "DualGradientProjection",
    "compute_lipschitz",
    "solve",
    "iteration_ops",
]


def iteration_ops(n: int, m: int) -> int:
    """Operation count of one iteration: MACs of both products plus vector adds."""
    return 2 * n * m + n + 2 * m


@dataclass(frozen=True)
class SolverConfig:
    L_phi: Optional[float] = None
    eps_V: float = 1e-6
    eps_g: float = 1e-6
    max_iters: int = 2000
    arithmetic: Optional[FixedFormat] = None
    equilibrate: bool = True
    raise_on_max_iters: bool = True
    raise_on_overflow: bool = True
    # h and d are multiplied by 2**vector_shift before the fixed-point
    # iteration (None: half the integer bits of the format)
    vector_shift: Optional[int] = None

    def __post_init__(self):
        if self.L_phi is not None and not self.L_phi > 0:
            raise ValueError(f"L_phi must be positive, got {self.L_phi}")
        if self.eps_V < 0 or self.eps_g < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.vector_shift is not None and self.vector_shift < 0:
            raise ValueError("vector_shift must be nonnegative")

    @property
    def shift(self) -> int:
        if self.vector_shift is not None:
            return self.vector_shift
        return 0 if self.arithmetic is None else self.arithmetic.r // 2


@dataclass
class SolverResult:
    z: np.ndarray
    y: np.ndarray
    iters: int
    infeasibility: float
    dual_gap_bound: float
    ops: int
    overflow: bool = False
    converged: bool = True
    check_ops: int = 0
    # with record=True: (z, y) of every iterate, in the caller's units
    history: Optional[list] = field(default=None, repr=False)


class Float64Backend:
    """Plain double precision; counts operations like the fixed-point backend."""

    def __init__(self):
        self.ops = 0

    def encode(self, a):
        return np.array(a, dtype=float)

    def decode(self, a):
        return np.asarray(a, dtype=float)

    def matvec(self, M, x, bias=None):
        self.ops += M.size
        if bias is None:
            return M @ x
        self.ops += bias.size
        return M @ x + bias

    def add(self, a, b):
        self.ops += a.size
        return a + b

    def sub(self, a, b):
        self.ops += a.size
        return a - b

    def dot(self, a, b):
        self.ops += a.size
        return a @ b

    dot_wide = dot

    def encode_wide(self, v: float) -> float:
        return float(v)

    def positive_part(self, a):
        return np.maximum(a, 0.0)

    def zeros(self, k):
        return np.zeros(k)


class FixedBackend:
    """Q-format arithmetic on raw integer mantissas."""

    def __init__(self, fmt: FixedFormat):
        self.fmt = fmt
        self.ops = 0

    def encode(self, a):
        return fx.quantize_array(a, self.fmt)

    def decode(self, a):
        return fx.dequantize_array(a, self.fmt)

    def matvec(self, M, x, bias=None):
        self.ops += M.size + (0 if bias is None else bias.size)
        return fx.matvec_raw(M, x, self.fmt, bias)

    def add(self, a, b):
        self.ops += a.size
        return fx.add_raw(a, b, self.fmt)

    def sub(self, a, b):
        self.ops += a.size
        return fx.sub_raw(a, b, self.fmt)

    def dot(self, a, b):
        self.ops += a.size
        return fx.matvec_raw(a[np.newaxis, :], b, self.fmt)[0]

    def dot_wide(self, a, b):
        self.ops += a.size
        return fx.dot_wide_raw(a, b, self.fmt)

    def encode_wide(self, v: float) -> int:
        # scalar in the double-width accumulator format (2p fraction bits)
        return int(round(v * 2.0 ** (2 * self.fmt.p)))

    def positive_part(self, a):
        return np.where(a > 0, a, 0 * a)

    def zeros(self, k):
        return fx.quantize_array(np.zeros(k), self.fmt)


def _make_backend(fmt: Optional[FixedFormat]):
    return Float64Backend() if fmt is None else FixedBackend(fmt)


def _dual_hessian(H, D):
    return D @ np.linalg.solve(H, D.T)


def compute_lipschitz(qp_or_H, D=None, rtol: float = 1e-6, inflation: float = 1.01, max_iter: int = 100_000) -> float:
    """Largest eigenvalue of ``D H^-1 D'`` by power iteration, inflated by 1 %.

    Accepts a :class:`~fxmpc.mpc.CondensedQp` or an explicit ``(H, D)`` pair.
    """
    if D is None:
        H, D = qp_or_H.H, qp_or_H.D
    else:
        H = qp_or_H
    H = np.atleast_2d(np.asarray(H, dtype=float))
    D = np.atleast_2d(np.asarray(D, dtype=float))
    if D.shape[0] == 0 or not np.any(D):
        return 1.0
    P = _dual_hessian(H, D)
    v = np.random.default_rng(0).standard_normal(P.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = P @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            raise ConvergenceError("power iteration collapsed to the null space")
        lam_next = float(v @ w)
        v = w / nw
        if abs(lam_next - lam) <= rtol * abs(lam_next):
            return inflation * max(lam_next, nw)
        lam = lam_next
    raise ConvergenceError(f"power iteration did not reach rtol={rtol} in {max_iter} steps")


class DualGradientProjection:
    """Solver bound to one QP structure (``H``, ``D``); ``h``/``d`` vary per call."""

    def __init__(self, H, D, cfg: SolverConfig = SolverConfig()):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise DimensionError(f"H must be square, got {H.shape}")
        D = np.asarray(D, dtype=float)
        if D.size == 0:
            D = D.reshape(0, H.shape[0])
        D = np.atleast_2d(D)
        if D.ndim != 2 or D.shape[1] != H.shape[0]:
            raise DimensionError(f"D must have {H.shape[0]} columns, got shape {D.shape}")
        n, m = H.shape[0], D.shape[0]
        self.n, self.m = n, m
        self.cfg = cfg
        self.H, self.D = H, D
        H_inv = np.linalg.inv(H)
        H_inv = 0.5 * (H_inv + H_inv.T)

        row = np.ones(m)
        col = np.ones(n)
        if cfg.equilibrate and m:
            diagP = np.einsum("ij,jk,ik->i", D, H_inv, D)
            nz = diagP > 0
            row[nz] = 1.0 / np.sqrt(diagP[nz])
        Dr = row[:, None] * D
        L = cfg.L_phi if cfg.L_phi is not None else compute_lipschitz(H, Dr)
        M1 = -H_inv @ Dr.T
        DL = Dr / L
        if cfg.equilibrate and m:
            a = np.abs(M1).max(axis=1)
            b = np.abs(DL).max(axis=0)
            ok = (a > 0) & (b > 0)
            col[ok] = np.sqrt(a[ok] / b[ok])
        self.row_scale, self.col_scale, self.L = row, col, float(L)
        self._M1_f = M1 / col[:, None]
        self._DL_f = DL * col[None, :]
        self._H_inv = H_inv

        self.backend = _make_backend(cfg.arithmetic)
        self.M1 = self.backend.encode(self._M1_f)
        self.DL = self.backend.encode(self._DL_f)
        # The QP solution is positively homogeneous in (h, d): scaling both by
        # c scales z and y by c.  A power of two is exact and moves the
        # iterates up into the otherwise unused integer range.
        self.vec_scale = float(2 ** cfg.shift)
        c = self.vec_scale
        # stopping thresholds in the scaled dual coordinates
        self.thr_g = self.backend.encode(c * cfg.eps_g * row / L)
        self.thr_V = self.backend.encode_wide(c * c * cfg.eps_V / L)

    @property
    def data_words(self) -> int:
        """Stored words for the iteration matrices and per-sample vectors."""
        return 2 * self.n * self.m + self.n + self.m

    def _encode_vectors(self, h, d):
        c = self.vec_scale
        m2 = -c * (self._H_inv @ h) / self.col_scale
        dL = c * self.row_scale * d / self.L
        return self.backend.encode(m2), self.backend.encode(dL)

    def solve(self, h, d, warm_y=None, record: bool = False) -> SolverResult:
        h = np.asarray(h, dtype=float).ravel()
        d = np.asarray(d, dtype=float).ravel()
        if h.size != self.n or d.size != self.m:
            raise DimensionError(f"expected h ({self.n}) and d ({self.m}), got {h.size}, {d.size}")
        cfg, be = self.cfg, self.backend
        be.ops = 0
        check = _make_backend(cfg.arithmetic)

        history = [] if record else None
        best = None
        overflow = False
        converged = False
        iters = 0
        fast = isinstance(be, Float64Backend) and not record
        try:
            m2, dL = self._encode_vectors(h, d)
            if warm_y is None:
                y = be.zeros(self.m)
            else:
                y = be.encode(self.vec_scale * np.maximum(np.asarray(warm_y, dtype=float), 0.0) / self.row_scale)
            if fast:
                z, y, iters, converged = self._iterate_float(y, m2, dL)
                n, m = self.n, self.m
                be.ops = iters * (2 * n * m + n + m) + (iters - int(converged)) * m
                check.ops = iters * m
                best = (z, y)
            for it in range(0 if fast else cfg.max_iters):
                iters = it + 1
                z = be.matvec(self.M1, y, m2)
                gL = be.sub(be.matvec(self.DL, z), dL)
                if record:
                    history.append((self._z_out(z), self._y_out(y)))
                best = (z, y)
                # y'g <= 0 near the optimum; -y'g bounds the suboptimality.
                # Evaluated in a wide accumulator so tiny products are not rounded away.
                neg_gap = check.dot_wide(y, gL)
                if np.all(gL <= self.thr_g) and -neg_gap <= self.thr_V:
                    converged = True
                    break
                y = be.positive_part(be.add(y, gL))
        except FixedPointOverflow as exc:
            if cfg.raise_on_overflow:
                err = FixedPointOverflow(f"overflow in solver iteration {iters}: {exc}")
                err.iteration = iters
                raise err from exc
            overflow = True

        if best is None:
            z_out = np.zeros(self.n)
            y_out = np.zeros(self.m)
        else:
            z_out = self._z_out(best[0])
            y_out = self._y_out(best[1])
        g = self.D @ z_out - d
        result = SolverResult(
            z=z_out,
            y=y_out,
            iters=iters,
            infeasibility=float(np.max(g, initial=0.0)),
            dual_gap_bound=float(max(0.0, -(y_out @ g))) if self.m else 0.0,
            ops=be.ops,
            overflow=overflow,
            converged=converged,
            check_ops=check.ops,
            history=history,
        )
        if not converged and not overflow and cfg.raise_on_max_iters:
            raise MaxItersExceeded(f"no ({cfg.eps_V}, {cfg.eps_g})-optimal point in {cfg.max_iters} iterations", result)
        return result

    def _iterate_float(self, y, m2, dL):
        """The float64 iteration of :meth:`solve` without backend dispatch.

        Same operations in the same order, so results are bit-identical.
        """
        M1, DL, thr_g, thr_V = self.M1, self.DL, self.thr_g, self.thr_V
        z = np.empty(self.n)
        gL = np.empty(self.m)
        iters = 0
        for it in range(self.cfg.max_iters):
            iters = it + 1
            np.matmul(M1, y, out=z)
            z += m2
            np.matmul(DL, z, out=gL)
            gL -= dL
            if (gL <= thr_g).all() and -(y @ gL) <= thr_V:
                return z, y, iters, True
            y_next = np.maximum(y + gL, 0.0)
            if iters == self.cfg.max_iters:
                break
            y = y_next
        return z, y, iters, False

    def _z_out(self, z):
        return self.col_scale * self.backend.decode(z) / self.vec_scale

    def _y_out(self, y):
        return self.row_scale * self.backend.decode(y) / self.vec_scale


def solve(qp, h, d, cfg: SolverConfig = SolverConfig(), warm_y=None) -> SolverResult:
    """One-shot convenience wrapper around :class:`DualGradientProjection`."""
    return DualGradientProjection(qp.H, qp.D, cfg).solve(h, d, warm_y)
