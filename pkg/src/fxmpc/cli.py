"""Command-line entry point: ``fxmpc <experiment> [--config FILE] [--out DIR] ...``.

Every experiment writes one CSV log per closed-loop run plus a
``<experiment>_summary.csv`` into the output directory.  Exit status is 0 on
success, 2 if a simulation diverged and 3 on a fixed-point overflow abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import OverflowAbort, SimDiverged
from .sim import experiments as ex
from .sim.config import load_config
from .sim.harness import write_log

EXIT_OK, EXIT_DIVERGED, EXIT_OVERFLOW = 0, 2, 3

DEFAULTS = {
    "track-sin": ex.sinusoid_scenario,
    "offset-free": ex.offset_free_scenario,
    "doa": ex.doa_scenario,
    "fxp-accuracy": ex.sinusoid_scenario,
    "rest-to-rest": ex.rest_to_rest_scenario,
    "complexity": lambda: ex.complexity_scenarios()["u"],
}


def _scenario(args):
    cfg = load_config(args.config) if args.config else DEFAULTS[args.command]()
    if args.float:
        cfg = cfg.replace(word_bits=None)
    if args.word_bits is not None:
        cfg = cfg.replace(word_bits=args.word_bits)
    if args.frac_bits is not None:
        cfg = cfg.replace(frac_bits=args.frac_bits)
    return cfg


def _fmt(v) -> str:
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def _report(name, rows, out: Path) -> None:
    path = out / f"{name}_summary.csv"
    ex.write_summary(rows, path)
    print(f"wrote {path}")


def cmd_track_sin(cfg, args, out):
    res = ex.experiment_tracking(cfg)
    write_log(res.log, out / "track_sin.csv")
    for r in res.summary_rows():
        print(f"{r['metric']}: {_fmt(r['value'])}")
    _report("track_sin", res.summary_rows(), out)


def cmd_offset_free(cfg, args, out):
    res = ex.experiment_offset_free(cfg, settle_after=args.settle_after)
    write_log(res.with_governor, out / "offset_free_on.csv")
    write_log(res.without_governor, out / "offset_free_off.csv")
    print(f"steady-state error after {args.settle_after:g} s, governor on:  {res.error_with.max():.3e} rad")
    print(f"steady-state error after {args.settle_after:g} s, governor off: {res.error_without.max():.3e} rad")
    _report("offset_free", res.summary_rows(), out)


def cmd_rest_to_rest(cfg, args, out):
    res = ex.experiment_rest_to_rest(cfg, bounds=(("loose", args.loose), ("tight", args.tight)), tol=args.tol)
    for name, log in res.logs.items():
        write_log(log, out / f"rest_to_rest_{name}.csv")
        print(f"{name}: settling time {res.settling[name]:g} s, torque violation {res.violation[name]:.2e}")
    _report("rest_to_rest", res.summary_rows(), out)


def cmd_doa(cfg, args, out):
    def progress(start, mod, std):
        print(f"roll={start[0]:+.3f} pitch={start[1]:+.3f}: modified={int(mod)} standard={int(std)}", flush=True)

    roll = tuple(float(v) for v in _linspace(-1.6, 1.6, args.roll_points))
    pitch = tuple(float(v) for v in _linspace(-1.1, 1.1, args.pitch_points))
    res = ex.experiment_domain_of_attraction(cfg, roll=roll, pitch=pitch, timeout=args.timeout,
                                             target_radius=args.radius, hold=args.hold,
                                             progress=None if args.quiet else progress)
    print(f"modified converged: {int(res.modified.sum())}/{res.modified.size}, "
          f"standard converged: {int(res.standard.sum())}/{res.standard.size}, "
          f"standard subset of modified: {res.standard_subset_of_modified}")
    _report("doa", res.summary_rows(), out)


def _linspace(a, b, k):
    if k == 1:
        return [0.5 * (a + b)]
    return [a + (b - a) * i / (k - 1) for i in range(k)]


def cmd_fxp_accuracy(cfg, args, out):
    # --float compares float64 against itself (a determinism check)
    res = ex.experiment_fixed_point_accuracy(cfg, word_bits=None if args.float else 32)
    write_log(res.fixed, out / "fxp_fixed.csv")
    write_log(res.reference, out / "fxp_float.csv")
    print(f"max attitude discrepancy: {res.max_discrepancy_deg:.3e} deg")
    _report("fxp_accuracy", res.summary_rows(), out)


def cmd_complexity(cfg, args, out):
    rows = ex.experiment_complexity(**{k: getattr(cfg, k) for k in ("J", "Jw", "Ts", "N", "Nc", "word_bits")})
    for r in rows:
        print(f"{r['constraints']:8s} n={r['n']} m={r['m']} ops/iter={r['ops_per_iter']} bytes={r['data_bytes']}")
    _report("complexity", rows, out)


COMMANDS = {
    "track-sin": cmd_track_sin,
    "offset-free": cmd_offset_free,
    "doa": cmd_doa,
    "fxp-accuracy": cmd_fxp_accuracy,
    "rest-to-rest": cmd_rest_to_rest,
    "complexity": cmd_complexity,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fxmpc", description="Fixed-point MPC attitude control experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario JSON file (defaults to the experiment's built-in scenario)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    common.add_argument("--word-bits", type=int, help="run the QP solver in fixed point with this word length")
    common.add_argument("--frac-bits", type=int, help="fractional bits of the fixed-point format")
    common.add_argument("--float", action="store_true", help="run the QP solver in float64")
    common.add_argument("--dump-config", action="store_true", help="print the effective scenario JSON and exit")

    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "offset-free":
            sp.add_argument("--settle-after", type=float, default=200.0)
        elif name == "rest-to-rest":
            sp.add_argument("--loose", type=float, default=3.0, help="loose torque bound (N m)")
            sp.add_argument("--tight", type=float, default=0.2, help="tight torque bound (N m)")
            sp.add_argument("--tol", type=float, default=0.005, help="settling band (rad)")
        elif name == "doa":
            sp.add_argument("--roll-points", type=int, default=13)
            sp.add_argument("--pitch-points", type=int, default=7)
            sp.add_argument("--timeout", type=float, default=600.0, help="simulated seconds per grid point")
            sp.add_argument("--hold", type=float, default=30.0, help="seconds inside the target ball to stop early")
            sp.add_argument("--radius", type=float, default=0.05, help="target ball radius (rad)")
            sp.add_argument("--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.float and args.word_bits is not None:
        print("error: --float and --word-bits are mutually exclusive", file=sys.stderr)
        return 1
    cfg = _scenario(args)
    if args.dump_config:
        print(json.dumps(cfg.to_dict(), indent=2))
        return EXIT_OK
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        COMMANDS[args.command](cfg, args, args.out)
    except SimDiverged as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OverflowAbort as exc:
        print(f"fixed-point overflow: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
