"""Command-line interface.

    gammaseg <command> [--flag value]...

Commands: segment, sweep, pc-check, mm1d, minkowski, transport-dist,
check-potential.  Exit status is 0 on success, 1 with a one-line diagnostic
on any module error; identical invocations (flags + inputs + seed) produce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import fileio, gammalab
from .energy import EnergyParams
from .errors import GammaSegError
from .grid import threshold_half
from .potential import BUILTIN_WELLS, builtin_well, compute_cw, validate_assumption
from .solver import SegmentationState, SolverConfig, minimize
from .transport import clp_distance


def _ladder(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(","))


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--p", type=float, default=2.0, help="misfit exponent, in (1, inf)")
    p.add_argument("--mu", type=float, default=1.0, help="smoothness weight, >= 0")
    p.add_argument("--nu", type=float, default=0.1, help="interface weight, > 0")
    p.add_argument("--well", choices=BUILTIN_WELLS, default="quartic", help="double-well potential")
    p.add_argument("--mode", choices=("smooth", "piecewise_constant"), default="smooth", help="field model")
    p.add_argument("--seed", type=int, default=0, help="RNG seed for the initializer")
    p.add_argument("--max-outer", type=int, default=200, help="outer iteration cap, >= 1")
    p.add_argument("--tol", type=float, default=1e-7, help="relative energy-decrease stop, > 0")
    p.add_argument("--tau", type=float, default=0.5, help="phase step size, > 0")
    p.add_argument("--eta", type=float, default=1e-3, help="weight floor, in (0, 1e-3]")
    p.add_argument("--cg-tol", type=float, default=1e-10, help="inner linear-solve tolerance, > 0")
    p.add_argument("--cg-max", type=int, default=5000, help="inner iteration cap, >= 1")


def _cfg(args) -> SolverConfig:
    return SolverConfig(
        max_outer=args.max_outer,
        tol=args.tol,
        tau=args.tau,
        eta=args.eta,
        cg_tol=args.cg_tol,
        cg_max=args.cg_max,
        mode=args.mode,
        seed=args.seed,
    )


def _outdir(args) -> Path:
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _mu_rule(args) -> gammalab.MuRule:
    if args.mu_seq:
        return gammalab.MuRule(kind="sequence", sequence=_ladder(args.mu_seq))
    if args.mu_alpha > 0:
        return gammalab.MuRule(kind="divergent", mu0=args.mu, alpha=args.mu_alpha)
    return gammalab.MuRule(kind="fixed", value=args.mu)


def cmd_segment(args) -> int:
    u0 = fileio.load_image(args.input)
    W = builtin_well(args.well)
    params = EnergyParams(p=args.p, mu=args.mu, nu=args.nu, eps=args.eps)
    state, trace = minimize(u0, W, params, _cfg(args))
    out = _outdir(args)
    fileio.save_mask(threshold_half(state.v), out / "mask.pgm")
    rows = [
        (args.eps, args.mu, b.total, b.data1, b.data2, b.grad1, b.grad2, b.gl)
        for b in trace
    ]
    fileio.write_rows(out / "trace.csv", fileio.TRACE_HEADER, rows)
    print(f"converged in {len(trace) - 1} steps; final energy {trace[-1].total!r}")
    return 0


def cmd_sweep(args) -> int:
    u0 = fileio.load_image(args.input)
    W = builtin_well(args.well)
    plan = gammalab.SweepPlan(
        eps_ladder=_ladder(args.eps_ladder),
        mu_rule=_mu_rule(args),
        nu=args.nu,
        p=args.p,
        warm_start=not args.cold_start,
        max_exact=args.max_exact,
    )
    report = gammalab.epsilon_sweep(u0, W, plan, _cfg(args))
    out = _outdir(args)
    fileio.write_report(report, out / "report.csv")
    for row, state in zip(report.rows, report.states):
        fileio.save_mask(threshold_half(state.v), out / f"mask_eps_{row.eps:g}.pgm")
    print(f"wrote {len(report.rows)} ladder rows to {out / 'report.csv'}")
    return 0


def cmd_pc_check(args) -> int:
    u0 = fileio.load_image(args.input)
    W = builtin_well(args.well)
    args.mode = "piecewise_constant"
    plan = gammalab.SweepPlan(
        eps_ladder=_ladder(args.eps_ladder),
        mu_rule=gammalab.MuRule(kind="fixed", value=args.mu),
        nu=args.nu,
        p=args.p,
    )
    rep = gammalab.pc_gamma_check(u0, W, plan, _cfg(args))
    out = _outdir(args)
    fileio.write_rows(
        out / "pc_report.csv", "eps,E_eps,E_limit,gap,dc1,dc2,tv_sharp", rep.rows
    )
    for row, state in zip(rep.rows, rep.states):
        fileio.save_mask(threshold_half(state.v), out / f"mask_eps_{row.eps:g}.pgm")
    print(f"wrote {len(rep.rows)} ladder rows to {out / 'pc_report.csv'}")
    return 0


def cmd_mm1d(args) -> int:
    W = builtin_well(args.well)
    rows = gammalab.modica_mortola_1d(
        W, _ladder(args.eps_ladder), n_cells=args.cells, interfaces=args.interfaces
    )
    out = _outdir(args)
    fileio.write_rows(out / "mm1d.csv", "eps,n_cells,gl,ratio,steps", rows)
    for r in rows:
        print(f"eps={r.eps:g} gl={r.gl!r} ratio={r.ratio!r}")
    return 0


def cmd_minkowski(args) -> int:
    u0 = fileio.load_image(args.input)
    mask = threshold_half(_scalar_of(u0))
    rows = gammalab.minkowski_study(mask, _ladder(args.a_ladder))
    out = _outdir(args)
    fileio.write_rows(out / "minkowski.csv", "a,volume,content,perimeter_ref,rel_dev", rows)
    for r in rows:
        print(f"a={r.a:g} volume={r.volume!r} content={r.content!r}")
    return 0


def _scalar_of(u0):
    from .grid import ScalarField

    return ScalarField(u0.grid, u0.channel_mean())


def cmd_transport_dist(args) -> int:
    ua = fileio.load_image(args.input)
    ub = fileio.load_image(args.input_b)
    sa = SegmentationState(_scalar_of(ua), ua, ua)
    sb = SegmentationState(_scalar_of(ub), ub, ub)
    d = clp_distance(sa, sb, args.p, max_exact=args.max_exact)
    print(repr(d))
    return 0


def cmd_check_potential(args) -> int:
    W = builtin_well(args.well)
    rep = validate_assumption(W, samples=args.samples)
    cw = compute_cw(W, tol=args.cw_tol)
    print(f"well={args.well} cw={cw!r} assumption={'pass' if rep.ok else 'FAIL'}")
    if not rep.ok:
        print(f"violation at t={rep.offending_t}: {rep.message}")
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gammaseg", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="segment one image at fixed eps")
    p.add_argument("--input", required=True, help="input PGM/PPM path")
    p.add_argument("--outdir", required=True, help="writable output directory")
    p.add_argument("--eps", type=float, default=0.05, help="interface width, > 0")
    _add_solver_flags(p)
    p.set_defaults(fn=cmd_segment)

    p = sub.add_parser("sweep", help="eps ladder with gap/threshold/distance report")
    p.add_argument("--input", required=True, help="input PGM/PPM path")
    p.add_argument("--outdir", required=True, help="writable output directory")
    p.add_argument("--eps-ladder", required=True, help="comma list, strictly decreasing, >= 3 rungs")
    p.add_argument("--mu-seq", default="", help="comma list of per-rung mu values")
    p.add_argument("--mu-alpha", type=float, default=0.0, help="if > 0, mu = mu0/eps^alpha")
    p.add_argument("--cold-start", action="store_true", help="disable warm starts")
    p.add_argument("--max-exact", type=int, default=4096, help="largest support solved exactly")
    _add_solver_flags(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("pc-check", help="two-constant ladder report")
    p.add_argument("--input", required=True, help="input PGM/PPM path")
    p.add_argument("--outdir", required=True, help="writable output directory")
    p.add_argument("--eps-ladder", required=True, help="comma list, strictly decreasing, >= 3 rungs")
    _add_solver_flags(p)
    p.set_defaults(fn=cmd_pc_check)

    p = sub.add_parser("mm1d", help="1D interface-energy study")
    p.add_argument("--outdir", required=True, help="writable output directory")
    p.add_argument("--eps-ladder", default="0.05,0.02,0.01", help="comma list, strictly decreasing")
    p.add_argument("--cells", type=int, default=4096, help="grid cells, >= 1024")
    p.add_argument("--interfaces", type=int, default=1, choices=(1, 2), help="initial jumps")
    p.add_argument("--well", choices=BUILTIN_WELLS, default="quartic")
    p.set_defaults(fn=cmd_mm1d)

    p = sub.add_parser("minkowski", help="boundary-collar volume study")
    p.add_argument("--input", required=True, help="mask image (thresholded at 1/2)")
    p.add_argument("--outdir", required=True, help="writable output directory")
    p.add_argument("--a-ladder", required=True, help="comma list of collar widths, > cell size")
    p.set_defaults(fn=cmd_minkowski)

    p = sub.add_parser("transport-dist", help="state distance between two images")
    p.add_argument("--input", required=True, help="first PGM/PPM")
    p.add_argument("--input-b", required=True, help="second PGM/PPM")
    p.add_argument("--p", type=float, default=2.0, help="exponent, in (1, inf)")
    p.add_argument("--max-exact", type=int, default=4096, help="largest support solved exactly")
    p.set_defaults(fn=cmd_transport_dist)

    p = sub.add_parser("check-potential", help="well-assumption report and cw")
    p.add_argument("--well", choices=BUILTIN_WELLS, default="quartic")
    p.add_argument("--samples", type=int, default=1000, help="sample count, >= 100")
    p.add_argument("--cw-tol", type=float, default=1e-10, help="quadrature tolerance, > 0")
    p.set_defaults(fn=cmd_check_potential)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (GammaSegError, ValueError, OSError, RuntimeError) as exc:
        print(f"gammaseg {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
