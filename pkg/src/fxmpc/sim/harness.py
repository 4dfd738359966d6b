"""Closed-loop simulation: nonlinear plant, MPC, reference integrator, QP solver."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ..dynamics import GimbalLockError, integrate_interval
from ..errors import OverflowAbort, SimDiverged
from ..fixed_point import FixedPointOverflow
from ..gpd import DualGradientProjection
from ..mpc import ReferenceGovernor, condense, extract_control, lift_reference, update_qp_vectors
from .config import ScenarioConfig

__all__ = ["LOG_COLUMNS", "SimLog", "MpcController", "run_closed_loop", "write_log", "read_log"]

LOG_COLUMNS = (
    ["time"]
    + ["phi", "theta", "psi"]
    + [f"omega_{i}" for i in (1, 2, 3)]
    + [f"wheel_{i}" for i in (1, 2, 3)]
    + [f"u_{i}" for i in (1, 2, 3)]
    + [f"r_{i}" for i in (1, 2, 3)]
    + [f"rbar_{i}" for i in (1, 2, 3)]
    + ["iters", "ops", "infeasibility", "overflow"]
)

# attitude magnitude treated as a runaway simulation
_DIVERGENCE_ANGLE = 10.0 * math.pi


@dataclass
class SimLog:
    """One row per controller sample, columns as in :data:`LOG_COLUMNS`."""

    rows: list = field(default_factory=list)

    def append(self, row) -> None:
        if len(row) != len(LOG_COLUMNS):
            raise ValueError(f"row has {len(row)} entries, expected {len(LOG_COLUMNS)}")
        if self.rows and not row[0] > self.rows[-1][0]:
            raise ValueError("log times must be strictly increasing")
        self.rows.append([float(v) for v in row])

    def __len__(self) -> int:
        return len(self.rows)

    def array(self) -> np.ndarray:
        return np.asarray(self.rows, dtype=float).reshape(-1, len(LOG_COLUMNS))

    def column(self, name: str) -> np.ndarray:
        return self.array()[:, LOG_COLUMNS.index(name)]

    @property
    def time(self) -> np.ndarray:
        return self.column("time")

    @property
    def attitude(self) -> np.ndarray:
        return self.array()[:, 1:4]

    @property
    def wheel_speed(self) -> np.ndarray:
        return self.array()[:, 7:10]

    @property
    def u(self) -> np.ndarray:
        return self.array()[:, 10:13]

    @property
    def r(self) -> np.ndarray:
        return self.array()[:, 13:16]

    @property
    def r_bar(self) -> np.ndarray:
        return self.array()[:, 16:19]


class MpcController:
    """Per-sample control law: integrator, reference lift, QP update and solve."""

    def __init__(self, cfg: ScenarioConfig, qp=None, solver=None):
        self.cfg = cfg
        self.qp = qp if qp is not None else condense(cfg.model(), cfg.mpc_config(), cfg.constraints())
        self.solver = solver if solver is not None else DualGradientProjection(self.qp.H, self.qp.D, cfg.solver_config())
        self.governor = ReferenceGovernor(cfg.Ts, integral_gain=cfg.integral_gain, windup_limit=cfg.windup_limit)
        self.u_prev = np.zeros(3)
        self.y_prev = None

    def step(self, x6, r_bar):
        """Return ``(u, r, result)`` for controller state ``x6`` and true reference ``r_bar``."""
        if self.cfg.governor:
            r = self.governor.update(x6[:3], r_bar)
        else:
            r = np.asarray(r_bar, dtype=float)
        h, d = update_qp_vectors(self.qp, x6, lift_reference(r), self.u_prev)
        try:
            res = self.solver.solve(h, d, warm_y=self.y_prev if self.cfg.warm_start else None)
        except FixedPointOverflow as exc:
            raise OverflowAbort(str(exc)) from exc
        u = extract_control(res.z, self.u_prev)
        self.y_prev = res.y
        info = (res.iters, res.ops, res.infeasibility, float(res.overflow))
        self.u_prev = u
        return u, r, info


def run_closed_loop(cfg: ScenarioConfig, controller: MpcController | None = None, stop=None) -> SimLog:
    """Simulate ``cfg.duration`` seconds of closed-loop operation.

    ``stop(log)``, if given, is called after each sample and ends the run
    early when it returns True.  Raises :class:`SimDiverged` (with the
    partial log attached as ``.log``) on gimbal lock or runaway states.
    """
    ctrl = controller if controller is not None else MpcController(cfg)
    params = cfg.inertia()
    dist = np.asarray(cfg.disturbance, dtype=float)
    dist = dist if np.any(dist) else None
    x = cfg.initial_state().as_vector()
    log = SimLog()
    for k in range(cfg.n_samples):
        t = k * cfg.Ts
        r_bar = cfg.reference(t)
        x6 = np.concatenate([x[:3], x[6:9]])
        u, r, info = ctrl.step(x6, r_bar)
        log.append([t, *x[:9], *u, *r, *r_bar, *info])
        try:
            x = integrate_interval(x, u, params, cfg.dt, cfg.substeps, dist)
        except GimbalLockError as exc:
            err = SimDiverged(f"t={t:.2f}s: {exc}")
            err.log = log
            raise err from exc
        if not np.all(np.isfinite(x)) or np.abs(x[:3]).max() > _DIVERGENCE_ANGLE:
            err = SimDiverged(f"t={t:.2f}s: state left the valid region")
            err.log = log
            raise err
        if stop is not None and stop(log):
            break
    return log


def write_log(log: SimLog, path) -> None:
    """CSV with a header row and 12 significant digits per value."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for row in log.rows:
            w.writerow([f"{v:.12g}" for v in row])


def read_log(path) -> SimLog:
    log = SimLog()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != LOG_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in reader:
            log.rows.append([float(v) for v in row])
    return log
