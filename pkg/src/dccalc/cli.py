"""Command line interface: ``dccalc run``, ``dccalc demo cone`` and ``dccalc list``."""

import argparse
import os
import sys

from . import plotting
from .checks import Context
from .errors import DCCalcError, SchemaError
from .report import rows_to_csv, run_scene, to_csv, to_json
from .scene import bundled_names, bundled_path


def _resolve(scene):
    if os.path.exists(scene) or scene.lstrip().startswith("{"):
        return scene
    if scene in bundled_names():
        return bundled_path(scene)
    raise FileNotFoundError(f"no scene file or bundled scene named {scene!r}")


def _emit(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)


def cmd_run(args):
    ctx = Context(tolerance=args.tolerance, tier=args.tier, quadrature_order=args.quadrature_order, seed=args.seed)
    try:
        report = run_scene(_resolve(args.scene), ctx)
    except SchemaError as exc:
        print(f"SchemaError at {exc.path}: {exc}", file=sys.stderr)
        return 2
    except (DCCalcError, FileNotFoundError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    text = to_json(report) if args.format == "json" else to_csv(report)
    _emit(text, args.report)
    if args.plots:
        os.makedirs(args.plots, exist_ok=True)
        plotting.residual_bars(report, os.path.join(args.plots, f"{report['scene']}-residuals.png"))
        for rec in report["checks"]:
            if rec["kind"] == "taylor" and "details" in rec:
                plotting.taylor_decay(rec, os.path.join(args.plots, f"{report['scene']}-{rec['id']}.png"))
    for rec in report["checks"]:
        if not rec["pass"]:
            msg = rec.get("error") or f"residual {rec['residual']:.3e} > tolerance {rec['tolerance']:.1e}"
            print(f"FAIL {rec['id']}: {msg}", file=sys.stderr)
    return 0 if report["all_pass"] else 1


def cone_report(angle="3pi/2", base_radius=1.0, annulus=None, n_samples=50):
    """Agreement report for the cone demo (no matplotlib objects, JSON-ready)."""
    from .conedemo import ConeScene, angle_regression, chart_independence, cut_locus_jump_measure, mass_balance

    sc = ConeScene(angle, base_radius, annulus)
    cut = cut_locus_jump_measure(sc, n_samples=n_samples)
    cut.pop("measure")
    bal = mass_balance(sc)
    reg = angle_regression(base_radius=base_radius, annulus=annulus)
    ind = chart_independence(sc)
    checks = {
        "jump_vs_oracle": {"value": cut["max_abs_error"], "tolerance": 1e-6, "pass": cut["max_abs_error"] <= 1e-6},
        "jump_nonpositive": {"value": cut["max_jump_density"], "pass": cut["hessian_jump_nonpositive"]},
        "jump_normal_to_cut": {"value": cut["max_tangential_jump"], "tolerance": 1e-12,
                               "pass": cut["max_tangential_jump"] <= 1e-12},
        "mass_balance": {"value": bal["residual"], "tolerance": 1e-9, "pass": bal["residual"] <= 1e-9},
        "angle_regression": {"value": reg["final"], "tolerance": 1e-3,
                             "pass": reg["decreasing"] and reg["final"] < 1e-3},
        "chart_independence": {"value": ind["max_spread"], "tolerance": 1e-9, "pass": ind["max_spread"] <= 1e-9},
    }
    return {
        "scene": "cone",
        "angle": sc.theta,
        "base_radius": sc.a,
        "annulus": list(sc.annulus),
        "checks": checks,
        "all_pass": all(c["pass"] for c in checks.values()),
        "cut_locus": cut,
        "mass_balance": bal,
        "angle_regression": reg,
        "chart_independence": ind,
    }


def cmd_demo(args):
    try:
        rep = cone_report(args.angle, args.base_radius, tuple(args.annulus) if args.annulus else None, args.samples)
    except (DCCalcError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    _emit(to_json(rep), args.report)
    rows = rep["cut_locus"]["rows"]
    if args.csv:
        _emit(rows_to_csv(rows, ["arclength", "jump_density", "oracle_density"]), args.csv)
    if args.plot:
        os.makedirs(os.path.dirname(os.path.abspath(args.plot)), exist_ok=True)
        plotting.cone_jump(rows, args.plot, title=f"cone angle {args.angle}, base radius {rep['base_radius']:g}")
    for name, c in rep["checks"].items():
        if not c["pass"]:
            print(f"FAIL {name}: {c['value']:.3e}", file=sys.stderr)
    return 0 if rep["all_pass"] else 1


def cmd_list(args):
    for name in bundled_names():
        print(name)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="dccalc", description="Measure-valued calculus identity checks.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the checks of a scene file or bundled scene")
    r.add_argument("scene", help="scene path or bundled scene name (see 'dccalc list')")
    r.add_argument("--tolerance", type=float, default=1e-9)
    r.add_argument("--quadrature-order", type=int, default=8)
    r.add_argument("--tier", choices=["exact", "numeric"], default="exact")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--report", default=None, help="output path (stdout if omitted)")
    r.add_argument("--format", choices=["json", "csv"], default="json")
    r.add_argument("--plots", default=None, help="directory for PNG figures")
    r.set_defaults(func=cmd_run)

    d = sub.add_parser("demo", help="worked examples")
    dsub = d.add_subparsers(dest="demo", required=True)
    c = dsub.add_parser("cone", help="distance function on a flat cone")
    c.add_argument("--angle", default="3pi/2")
    c.add_argument("--base-radius", type=float, default=1.0)
    c.add_argument("--annulus", type=float, nargs=2, default=None, metavar=("R0", "R1"))
    c.add_argument("--samples", type=int, default=50)
    c.add_argument("--report", default=None, help="JSON report path (stdout if omitted)")
    c.add_argument("--csv", default=None, help="CSV of arclength, jump_density, oracle_density")
    c.add_argument("--plot", default=None, help="PNG of the jump density")
    c.set_defaults(func=cmd_demo)

    ls = sub.add_parser("list", help="list bundled scenes")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
