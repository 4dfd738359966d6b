"""The closed-loop experiments and the controller complexity table.

Each ``*_scenario`` function returns the default :class:`ScenarioConfig` for
one experiment; each ``experiment_*`` function runs it and returns a small
result object whose ``summary_rows()`` feed the per-experiment summary CSV.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import SimDiverged
from ..gpd import DualGradientProjection, SolverConfig, iteration_ops
from ..mpc import condense
from .config import REST_TO_REST_TARGET, Reference, ScenarioConfig
from .harness import SimLog, run_closed_loop

__all__ = [
    "OFFSET_FREE_ATTITUDE",
    "sinusoid_scenario",
    "offset_free_scenario",
    "rest_to_rest_scenario",
    "doa_scenario",
    "complexity_scenarios",
    "settling_time",
    "max_bound_violation",
    "TrackingResult",
    "OffsetFreeResult",
    "RestToRestResult",
    "DoaResult",
    "FixedPointAccuracyResult",
    "experiment_tracking",
    "experiment_offset_free",
    "experiment_rest_to_rest",
    "converges_to_origin",
    "experiment_domain_of_attraction",
    "experiment_fixed_point_accuracy",
    "count_complexity",
    "experiment_complexity",
    "write_summary",
]

OFFSET_FREE_ATTITUDE = (0.08, -0.03, -0.1)
DOA_ROLL = tuple(np.linspace(-1.6, 1.6, 13))
DOA_PITCH = tuple(np.linspace(-1.1, 1.1, 7))


# ---------------------------------------------------------------------------
# default scenarios


def sinusoid_scenario(**changes) -> ScenarioConfig:
    """Per-axis sinusoidal attitude reference, float arithmetic, 600 s."""
    base = ScenarioConfig(reference=Reference.sinusoid(), governor=False, duration=600.0)
    return base.replace(**changes)


def offset_free_scenario(**changes) -> ScenarioConfig:
    """Hold a fixed attitude against a constant 0.01 N·m disturbance on every axis."""
    base = ScenarioConfig(
        initial_attitude=OFFSET_FREE_ATTITUDE,
        reference=Reference(kind="constant", value=OFFSET_FREE_ATTITUDE),
        disturbance=(0.01, 0.01, 0.01),
        governor=True,
        duration=300.0,
    )
    return base.replace(**changes)


def rest_to_rest_scenario(u_max: float = 3.0, **changes) -> ScenarioConfig:
    base = ScenarioConfig(
        reference=Reference.step(REST_TO_REST_TARGET),
        u_max=u_max,
        governor=False,
        duration=200.0,
    )
    return base.replace(**changes)


def doa_scenario(**changes) -> ScenarioConfig:
    """Regulation to the origin; the grid sets ``initial_attitude`` per point."""
    base = ScenarioConfig(governor=False, duration=300.0)
    return base.replace(**changes)


def complexity_scenarios(**changes) -> dict:
    """The three constraint sets of the complexity table, keyed by label."""
    base = ScenarioConfig(wheel_max=None).replace(**changes)
    return {
        "u": base,
        "u+du": base.replace(du_max=0.5),
        "u+du+x": base.replace(du_max=0.5, attitude_max=math.pi / 3, wheel_max=10.0),
    }


# ---------------------------------------------------------------------------
# log metrics


def settling_time(log: SimLog, target, tol: float) -> float:
    """First logged time after which every axis stays within ``tol`` of ``target``.

    Returns ``inf`` if the final sample is still outside the band.
    """
    err = np.abs(log.attitude - np.asarray(target, dtype=float)).max(axis=1)
    outside = np.flatnonzero(err > tol)
    if outside.size == 0:
        return float(log.time[0])
    last = outside[-1]
    if last == len(err) - 1:
        return math.inf
    return float(log.time[last + 1])


def max_bound_violation(log: SimLog, u_max: float) -> float:
    return float(max(0.0, np.abs(log.u).max(initial=0.0) - u_max))


# ---------------------------------------------------------------------------
# experiments


@dataclass
class TrackingResult:
    log: SimLog
    max_error: np.ndarray
    max_wheel_speed: float
    torque_violation: float

    def summary_rows(self):
        return [
            {"metric": f"max_tracking_error_{i + 1}", "value": float(e)} for i, e in enumerate(self.max_error)
        ] + [
            {"metric": "max_wheel_speed", "value": self.max_wheel_speed},
            {"metric": "torque_violation", "value": self.torque_violation},
        ]


def experiment_tracking(cfg: ScenarioConfig | None = None) -> TrackingResult:
    cfg = cfg or sinusoid_scenario()
    log = run_closed_loop(cfg)
    return TrackingResult(
        log=log,
        max_error=np.abs(log.attitude - log.r_bar).max(axis=0),
        max_wheel_speed=float(np.abs(log.wheel_speed).max()),
        torque_violation=max_bound_violation(log, float(cfg.u_max)),
    )


@dataclass
class OffsetFreeResult:
    with_governor: SimLog
    without_governor: SimLog
    settle_after: float
    error_with: np.ndarray
    error_without: np.ndarray

    def summary_rows(self):
        rows = []
        for name, err in (("governor_on", self.error_with), ("governor_off", self.error_without)):
            for i, e in enumerate(err):
                rows.append({"metric": f"steady_error_{name}_{i + 1}", "value": float(e)})
        return rows


def _steady_error(log: SimLog, after: float) -> np.ndarray:
    mask = log.time >= after
    return np.abs(log.attitude[mask] - log.r_bar[mask]).max(axis=0)


def experiment_offset_free(cfg: ScenarioConfig | None = None, settle_after: float = 200.0) -> OffsetFreeResult:
    """Run the same scenario with and without the reference integrator."""
    cfg = cfg or offset_free_scenario()
    on = run_closed_loop(cfg.replace(governor=True))
    off = run_closed_loop(cfg.replace(governor=False))
    return OffsetFreeResult(on, off, settle_after, _steady_error(on, settle_after), _steady_error(off, settle_after))


@dataclass
class RestToRestResult:
    logs: dict
    settling: dict
    violation: dict
    tol: float

    def summary_rows(self):
        return [
            {"case": k, "settling_time": self.settling[k], "torque_violation": self.violation[k]} for k in self.logs
        ]


def experiment_rest_to_rest(cfg: ScenarioConfig | None = None, bounds=(("loose", 3.0), ("tight", 0.2)),
                            tol: float = 0.005) -> RestToRestResult:
    cfg = cfg or rest_to_rest_scenario()
    target = cfg.reference(cfg.duration)
    logs, settling, violation = {}, {}, {}
    for name, u_max in bounds:
        log = run_closed_loop(cfg.replace(u_max=u_max))
        logs[name] = log
        settling[name] = settling_time(log, target, tol)
        violation[name] = max_bound_violation(log, u_max)
    return RestToRestResult(logs, settling, violation, tol)


@dataclass
class DoaResult:
    roll: tuple
    pitch: tuple
    yaw: float
    modified: np.ndarray
    standard: np.ndarray
    time_to_target: dict = field(default_factory=dict)

    def summary_rows(self):
        rows = []
        for i, ph in enumerate(self.roll):
            for j, th in enumerate(self.pitch):
                rows.append({
                    "roll": float(ph),
                    "pitch": float(th),
                    "yaw": self.yaw,
                    "modified": int(self.modified[i, j]),
                    "standard": int(self.standard[i, j]),
                })
        return rows

    @property
    def standard_subset_of_modified(self) -> bool:
        return bool(np.all(self.modified[self.standard]))


def _target_stop(radius: float, hold: float):
    """Stop callback: attitude inside the ball for ``hold`` consecutive seconds."""

    def stop(log: SimLog) -> bool:
        row = log.rows[-1]
        if max(abs(row[1]), abs(row[2]), abs(row[3])) > radius:
            stop.entered = None
            return False
        if stop.entered is None:
            stop.entered = row[0]
        return row[0] - stop.entered >= hold

    stop.entered = None
    return stop


def converges_to_origin(cfg: ScenarioConfig, radius: float = 0.05, hold: float = 30.0):
    """Run ``cfg`` and report ``(converged, time_of_entry)``.

    Convergence means the attitude enters the ball of ``radius`` about the
    origin and stays there for ``hold`` seconds (or until the timeout).
    Divergence or a numerical abort counts as not converged.
    """
    stop = _target_stop(radius, hold)
    try:
        log = run_closed_loop(cfg, stop=stop)
    except SimDiverged:
        return False, math.inf
    err = np.abs(log.attitude).max(axis=1)
    t = settling_time(log, np.zeros(3), radius)
    return bool(err[-1] <= radius and math.isfinite(t)), t


def experiment_domain_of_attraction(base: ScenarioConfig | None = None, roll=DOA_ROLL, pitch=DOA_PITCH,
                                    yaw: float = 0.0, target_radius: float = 0.05, timeout: float = 300.0,
                                    hold: float = 30.0, progress=None) -> DoaResult:
    """Grid search over initial roll/pitch for the modified and standard controllers."""
    base = (base or doa_scenario()).replace(duration=timeout)
    mod = np.zeros((len(roll), len(pitch)), dtype=bool)
    std = np.zeros_like(mod)
    times = {}
    for i, ph in enumerate(roll):
        for j, th in enumerate(pitch):
            start = (float(ph), float(th), float(yaw))
            for grid, virtual in ((mod, True), (std, False)):
                ok, t = converges_to_origin(base.replace(initial_attitude=start, virtual=virtual), target_radius, hold)
                grid[i, j] = ok
                times[(start, virtual)] = t
            if progress is not None:
                progress(start, bool(mod[i, j]), bool(std[i, j]))
    return DoaResult(tuple(roll), tuple(pitch), float(yaw), mod, std, times)


@dataclass
class FixedPointAccuracyResult:
    fixed: SimLog
    reference: SimLog
    discrepancy_deg: np.ndarray  # per sample, max over axes

    @property
    def max_discrepancy_deg(self) -> float:
        return float(self.discrepancy_deg.max(initial=0.0))

    def summary_rows(self):
        return [{"time": float(t), "discrepancy_deg": float(d)} for t, d in zip(self.fixed.time, self.discrepancy_deg)]


def experiment_fixed_point_accuracy(cfg: ScenarioConfig | None = None, word_bits: int | None = 32,
                                    frac_bits: int = 16) -> FixedPointAccuracyResult:
    """Run the closed loop in fixed point and in float64 and compare attitudes.

    A fixed-point format already selected in ``cfg`` takes precedence over
    ``word_bits``/``frac_bits``.  With neither set, both runs are float64
    and the discrepancy is exactly zero.
    """
    cfg = cfg or sinusoid_scenario()
    if cfg.word_bits is None and word_bits is not None:
        cfg = cfg.replace(word_bits=word_bits, frac_bits=frac_bits)
    fixed = run_closed_loop(cfg)
    ref = run_closed_loop(cfg.replace(word_bits=None))
    diff = np.degrees(np.abs(fixed.attitude - ref.attitude)).max(axis=1)
    return FixedPointAccuracyResult(fixed, ref, diff)


def count_complexity(qp, word_bits: int = 32, solver: DualGradientProjection | None = None) -> dict:
    """QP size, operations per solver iteration and stored data size.

    The operation count comes from running one instrumented iteration.
    """
    if solver is None:
        solver = DualGradientProjection(qp.H, qp.D, SolverConfig(max_iters=1, raise_on_max_iters=False))
    # d < 0 keeps the first iterate from terminating, so the dual update runs too
    res = solver.solve(np.zeros(qp.n), -np.ones(qp.m))
    ops = res.ops // res.iters
    assert ops == iteration_ops(qp.n, qp.m)
    return {
        "n": qp.n,
        "m": qp.m,
        "ops_per_iter": ops,
        "data_bytes": solver.data_words * word_bits // 8,
    }


def experiment_complexity(**changes) -> list:
    rows = []
    for label, cfg in complexity_scenarios(**changes).items():
        qp = condense(cfg.model(), cfg.mpc_config(), cfg.constraints())
        rows.append({"constraints": label, **count_complexity(qp, word_bits=cfg.word_bits or 32)})
    return rows


def write_summary(rows, path) -> None:
    """Write a list of flat dicts as CSV (header from the first row's keys)."""
    rows = list(rows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v) for k, v in r.items()})
