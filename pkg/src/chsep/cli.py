"""Command line entry point: ``chsep <command> ...``.

Every command exits with status 0 iff all of its embedded checks pass.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, SolverError, UnknownPreset
from .experiments import (
    PRESETS,
    Check,
    ExperimentConfig,
    continuous_dependence_study,
    inequality_sweep,
    lambda_continuation,
    preset,
    run_experiment,
    verify_directory,
)


def _load(spec: str) -> ExperimentConfig:
    """A config path, or ``preset:<name>``."""
    if spec.startswith("preset:"):
        return preset(spec.split(":", 1)[1])
    return ExperimentConfig.load(spec)


def _report(checks) -> int:
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    return 0 if all(c.passed for c in checks) else 1


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def cmd_run(args) -> int:
    exp = _load(args.config)
    out = Path(args.out)
    try:
        _, checks = run_experiment(exp, out)
    except SolverError as exc:
        print(f"FAIL run aborted: {exc}")
        return 1
    print(f"outputs written to {out}")
    return _report(checks)


def cmd_sweep_lambda(args) -> int:
    exp = _load(args.config)
    e = exp["experiment"]
    table = lambda_continuation(exp, e["lambdas"], e["t_probe"], workers=args.workers or e["workers"])
    for lam_a, lam_b, d in table.rows():
        print(f"{lam_a!r:>10} {lam_b!r:>10} {d:.6e}")
    print(f"slope {table.slope:.6f} over {table.used} pairs")
    if args.out:
        _write_rows(args.out, ["lambda_j", "lambda_j1", "distance"], table.rows())
    return _report([_check("slope", table.slope >= args.min_slope, f"{table.slope:.4f} >= {args.min_slope}")])


def _check(name, ok, detail):
    return Check(name, bool(ok), detail)


def cmd_cdep(args) -> int:
    exp = _load(args.config)
    e = exp["experiment"]
    t_end = exp["solver"]["t_end"]
    t_grid = np.linspace(0.0, t_end, e["t_grid_points"])
    table = continuous_dependence_study(exp, e["lambda1"], e["lambda2"], t_grid)
    for t, lhs, ratio in zip(table.times, table.lhs, table.ratio):
        print(f"{t:8.4f} {lhs:.6e} {ratio:.6e}")
    if args.out:
        _write_rows(args.out, ["t", "lhs", "ratio"], zip(table.times, table.lhs, table.ratio))
    detail = f"max ratio {table.max_ratio:.4e}, rhs0 {table.rhs0:.4e}"
    return _report([_check("bounded_ratio", table.bounded(), detail)])


def cmd_ineq(args) -> int:
    exp = _load(args.config)
    e = exp["experiment"]
    c_scale, C_scale = (10.0, 0.0) if args.self_test else (1.0, 1.0)
    rows = inequality_sweep(exp.potential(), e["deltas"], e["samples"], e["seed"], c_scale, C_scale)
    for r in rows:
        print(f"delta={r.delta:.6f} samples={r.samples} violations={r.violations} worst_slack={r.worst_slack:.6e}")
    found = sum(r.violations for r in rows)
    if args.self_test:
        return _report([_check("self_test", found > 0, f"{found} violations with perturbed constants")])
    return _report([_check("sharp_inequality", found == 0, f"{found} violations")])


def cmd_preset(args) -> int:
    try:
        exp = preset(args.name)
    except UnknownPreset:
        print(f"unknown preset {args.name!r}; choose from {', '.join(PRESETS)}", file=sys.stderr)
        return 2
    text = exp.to_text()
    if args.emit:
        Path(args.emit).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_verify(args) -> int:
    return _report(verify_directory(args.directory))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chsep", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="integrate one configuration and check its invariants")
    r.add_argument("config", help="INI file or preset:<name>")
    r.add_argument("--out", default="chsep_out")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep-lambda", help="lambda-continuation rate study")
    s.add_argument("config")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--min-slope", type=float, default=0.45)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_sweep_lambda)

    c = sub.add_parser("cdep", help="continuous-dependence ratio study")
    c.add_argument("config")
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_cdep)

    i = sub.add_parser("ineq", help="random sweep of the sharp inequality")
    i.add_argument("config")
    i.add_argument("--self-test", action="store_true", help="perturb the constants; violations expected")
    i.set_defaults(func=cmd_ineq)

    pr = sub.add_parser("preset", help="print or write a preset configuration")
    pr.add_argument("name")
    pr.add_argument("--emit", metavar="PATH", default=None)
    pr.set_defaults(func=cmd_preset)

    v = sub.add_parser("verify", help="re-check the invariants of a run directory")
    v.add_argument("directory")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UnknownPreset, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
