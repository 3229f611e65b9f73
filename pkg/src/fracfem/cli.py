"""Command line entry point: ``fracfem study|solve|verify-ops``."""

import argparse
import sys
from pathlib import Path

from . import femcore, march, study, verify


def _floats(text):
    return [float(s) for s in text.split(",") if s.strip()]


def _report(records):
    print(study.CSV_HEADER)
    names = study.CSV_HEADER.split(",")
    for r in records:
        print(",".join(study._fmt(getattr(r, n)) for n in names))


def _finish(config, records):
    ok, msgs = study.check_thresholds(records, config.eoc_l2_min, config.eoc_h1_min,
                                      norms=config.norms)
    for m in msgs:
        print(m)
    return 0 if ok else 1


def cmd_study(args):
    config = study.load_config(args.config)
    try:
        records = study.run_study(config)
    except march.GuardError as exc:
        print(f"guard failed: {exc}", file=sys.stderr)
        return 1
    _report(records)
    if config.csv_path:
        study.emit(records, "csv", config.csv_path)
    if config.svg_path:
        study.emit(records, "svg", config.svg_path)
    return _finish(config, records)


def cmd_solve(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = study.StudyConfig(
        alpha=args.alpha, case=args.case, h_levels=list(range(args.h_levels)),
        base_n=args.base_n, N=args.N, gamma=args.gamma, times=_floats(args.times),
        dim=args.dim, guard=not args.no_guard,
    )
    try:
        records = study.run_study(config)
    except march.GuardError as exc:
        print(f"guard failed: {exc}", file=sys.stderr)
        return 1
    study.emit(records, "csv", out / "study.csv")
    study.emit(records, "svg", out / "study.svg")
    # trajectory of the finest level
    problem, mesh_for, _ = study.build_case(config)
    space = femcore.FeSpace(mesh_for(config.h_levels[-1]))
    grid = march.TimeGrid(config.T, config.N, config.grading)
    traj = march.solve(problem, space, grid, config.times)
    march.export_trajectory(traj, out, "trajectory")
    for t in traj.inexact_times:
        print(f"note: t={t:g} is not a grid point; nearest grid time used")
    _report(records)
    return _finish(config, records)


def cmd_verify_ops(args):
    ok = True
    for check in verify.run_all():
        print(check.line())
        ok &= check.passed
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="fracfem", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("study", help="run a convergence study from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("solve", help="solve one case on a sequence of meshes")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--case", choices=study.CASES, default="spectral-smooth")
    p.add_argument("--h-levels", type=int, default=4, help="number of mesh levels")
    p.add_argument("--N", type=int, default=512)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--times", default="1.0", help="comma separated output times")
    p.add_argument("--out", required=True)
    p.add_argument("--base-n", type=int, default=8)
    p.add_argument("--dim", type=int, choices=(1, 2), default=1)
    p.add_argument("--no-guard", action="store_true")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify-ops", help="check the fractional operator identities")
    p.set_defaults(func=cmd_verify_ops)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
