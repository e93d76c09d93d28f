"""Command-line interface.

Exit codes: 0 success, 2 validation failure, 3 numeric non-convergence.
Flags override values from --config.
"""
import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from ._validation import ConvergenceError, ValidationError
from .criteria import best_robustness, feasible_period_interval, robustness_measure
from .deflection import KinematicContext, angle_grid_density, electron_angle_from_photon
from .kernel import build_kernel, emission_profile
from .optimizer import optimize_periods
from .pipeline import RunManifest, StageError, run_certify, run_sweep

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 2, 3


def _manifest(args):
    cfg = {}
    base = None
    if args.config:
        cfg = io.load_config(args.config)
        base = Path(args.config).parent
    if getattr(args, "x_max", None) is not None:
        cfg["x_max"] = args.x_max
    binning = dict(cfg.get("binning") or {})
    if getattr(args, "T_x", None) is not None:
        binning = {"T_x": args.T_x, "x_cen": args.x_cen, "p_cen": args.p_cen}
    if getattr(args, "optimize", False):
        binning = dict(binning, optimize=True)
    if getattr(args, "bounds", None):
        binning["bounds"] = list(args.bounds)
    if binning:
        cfg["binning"] = binning
    if getattr(args, "resolution", None):
        cfg["resolution"] = {"preset": args.resolution}
    if getattr(args, "counts", None):
        cfg["counts"] = {"xx": args.counts[0], "pp": args.counts[1]}
        base = None
    if getattr(args, "outputs", None):
        cfg["outputs"] = args.outputs
    return RunManifest.from_config(cfg, base)


def _summary(report):
    return {
        "witness_sum": report.witness_sum,
        "threshold": report.witness_threshold,
        "fidelity_bound": report.fidelity_bound,
        "ef_bound": report.ef_bound,
        "negativity": report.negativity,
        "entangled": report.entangled,
        "binning": report.binning,
    }


def cmd_certify(args):
    m = _manifest(args)
    report, arts = run_certify(m, args.out)
    print(io.dumps_report({"summary": _summary(report), "artifacts": arts}, m.digest()), end="")


def cmd_optimize(args):
    args.optimize = True
    m = _manifest(args)
    kernel = build_kernel(m.scenario)
    b = m.binning
    res = optimize_periods(kernel, m.resolution, bounds=tuple(b.get("bounds", (2.0, 20.0))),
                           tol=float(b.get("tol", 1e-3)), x_max=m.x_max,
                           optimize_centers=not args.no_centers)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        io.write_csv(out / "optimization_trace.csv", ["T_x", "T_p", "objective"], res.trace,
                     {"manifest_hash": m.digest()})
    print(io.dumps_report({"optimization": res.to_dict(),
                           "tables": {k: v.to_dict() for k, v in res.tables.items()}}, m.digest()), end="")


def cmd_sweep(args):
    m = _manifest(args)
    rows, path = run_sweep(m, args.axis, args.values, args.out)
    print(io.dumps_report({"axis": args.axis, "rows": rows, "csv": str(path) if path else None}, m.digest()),
          end="")


def cmd_profile(args):
    m = _manifest(args)
    theta = np.linspace(0.0, math.pi / 2, args.n_theta)
    prof = emission_profile(m.scenario, theta, tuple(args.kl_window) if args.kl_window else None)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        io.write_csv(out / "emission_profile.csv", ["theta_rad", "dP_dOmega_inside", "dP_dOmega_outside"],
                     zip(theta, prof.inside, prof.outside), {"manifest_hash": m.digest()})
    print(io.dumps_report({"theta_CR_deg": math.degrees(prof.theta_CR),
                           "theta_crit_deg": math.degrees(prof.theta_crit),
                           "p_out_total": prof.p_out_total, "p_out_solid_angle": prof.p_out_solid_angle,
                           "kl_window": prof.kl_window}, m.digest()), end="")


def cmd_deflect(args):
    ctx = KinematicContext.from_kinetic(args.E_kin, args.beta, tuple(args.window))
    E_mid = 0.5 * sum(ctx.E_window)
    out = {"phi_e_rad": electron_angle_from_photon(math.radians(args.phi_gamma_deg), E_mid, ctx),
           "E_gamma_eV": E_mid, "phi_gamma_deg": args.phi_gamma_deg}
    if args.out:
        g = np.linspace(-math.radians(args.grid_deg), math.radians(args.grid_deg), args.n)
        scale = abs(electron_angle_from_photon(g[-1], ctx.E_window[1], ctx)) * 1.2
        e = np.linspace(-scale, scale, args.n)
        dens = angle_grid_density(g, e, ctx) if ctx.delta_E > 0 else None
        if dens is None:
            raise ValidationError("grid export needs a window of non-zero width")
        path = Path(args.out)
        path.mkdir(parents=True, exist_ok=True)
        rows = ((g[i], e[j], dens[i, j]) for i in range(g.size) for j in range(e.size))
        io.write_csv(path / "deflection_density.csv", ["phi_gamma_rad", "phi_e_rad", "density"], rows,
                     {"E_window_eV": list(ctx.E_window), "beta": ctx.beta, "E_i_eV": ctx.E_i})
        out["csv"] = str(path / "deflection_density.csv")
    print(io.dumps_report(out), end="")


def cmd_robustness(args):
    if args.grid:
        sx = np.linspace(args.grid[0], args.grid[1], int(args.grid[2]))
        rows = []
        for a in sx:
            for b in sx:
                T, M = best_robustness(a, b)
                rows.append((a, b, T, M))
        if args.out:
            path = Path(args.out)
            path.mkdir(parents=True, exist_ok=True)
            io.write_csv(path / "robustness_surface.csv", ["sigma_x", "sigma_p", "best_T_x", "M"], rows)
        print(io.dumps_report({"points": len(rows), "min_M": min(r[3] for r in rows),
                               "max_M": max(r[3] for r in rows)}), end="")
        return
    out = {"sigma_x": args.sigma_x, "sigma_p": args.sigma_p}
    if args.T_x is not None:
        out["M"] = robustness_measure(sigma_x=args.sigma_x, sigma_p=args.sigma_p, T_x=args.T_x)
    iv = feasible_period_interval(args.sigma_x, args.sigma_p) if args.sigma_p > 0 else None
    out["feasible_interval"] = list(iv) if iv else None
    print(io.dumps_report(out), end="")


def build_parser():
    p = argparse.ArgumentParser(prog="cherenkov-mub", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def physics(sp):
        sp.add_argument("--config", help="YAML/JSON run configuration")
        sp.add_argument("--out", help="output directory for artifacts")
        sp.add_argument("--x-max", dest="x_max", type=float)
        sp.add_argument("--resolution", choices=["ideal", "experimental"])

    c = sub.add_parser("certify", help="full certification pipeline")
    physics(c)
    c.add_argument("--T-x", dest="T_x", type=float)
    c.add_argument("--x-cen", dest="x_cen", type=float, default=0.0)
    c.add_argument("--p-cen", dest="p_cen", type=float, default=0.0)
    c.add_argument("--optimize", action="store_true")
    c.add_argument("--bounds", nargs=2, type=float)
    c.add_argument("--counts", nargs=2, metavar=("XX_CSV", "PP_CSV"))
    c.add_argument("--outputs", nargs="+")
    c.set_defaults(fn=cmd_certify)

    o = sub.add_parser("optimize", help="optimize the basis periods")
    physics(o)
    o.add_argument("--bounds", nargs=2, type=float)
    o.add_argument("--no-centers", action="store_true")
    o.set_defaults(fn=cmd_optimize)

    s = sub.add_parser("sweep", help="scan one parameter")
    physics(s)
    s.add_argument("--axis", required=True)
    s.add_argument("--values", nargs="*", type=float, default=[])
    s.add_argument("--T-x", dest="T_x", type=float)
    s.add_argument("--x-cen", dest="x_cen", type=float, default=0.0)
    s.add_argument("--p-cen", dest="p_cen", type=float, default=0.0)
    s.set_defaults(fn=cmd_sweep)

    pr = sub.add_parser("profile", help="angular emission profile and P_out")
    physics(pr)
    pr.add_argument("--kl-window", nargs=2, type=float)
    pr.add_argument("--n-theta", type=int, default=2001)
    pr.set_defaults(fn=cmd_profile)

    d = sub.add_parser("deflect", help="deflection angles and joint angle density")
    d.add_argument("--E-kin", dest="E_kin", type=float, default=200e3)
    d.add_argument("--beta", type=float, default=0.7)
    d.add_argument("--window", nargs=2, type=float, default=[3.5, 4.0])
    d.add_argument("--phi-gamma-deg", type=float, default=26.77)
    d.add_argument("--grid-deg", type=float, default=60.0)
    d.add_argument("--n", type=int, default=201)
    d.add_argument("--out")
    d.set_defaults(fn=cmd_deflect)

    r = sub.add_parser("robustness", help="blur robustness measure")
    r.add_argument("--sigma-x", type=float, default=0.0)
    r.add_argument("--sigma-p", type=float, default=0.0)
    r.add_argument("--T-x", dest="T_x", type=float)
    r.add_argument("--grid", nargs=3, type=float, metavar=("LO", "HI", "N"))
    r.add_argument("--out")
    r.set_defaults(fn=cmd_robustness)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.fn(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED if isinstance(exc.cause, ConvergenceError) else EXIT_INVALID
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
