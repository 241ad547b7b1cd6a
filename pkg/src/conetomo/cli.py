"""Command-line entry point: ``conetomo <command> ...``.

Exit codes: 0 success, 2 usage error, 3 domain/validation error, 4 I/O error.
"""

import argparse
import csv
import logging
import re
import sys

import numpy as np

from .errors import ConeTomoError, GridFormatError
from .grids import ScanGeometry, export_csv, export_pgm, read_grid, write_grid
from .microlocal import coverage_map, predict_artifacts
from .operator import build_system_matrix, forward, load_matrix, save_matrix
from .phantoms import parse_phantom, rasterize, wavefront_samples
from .profiles import bragg_offset_bolker_scan, check_bolker, parse_profile
from .reconstruction import ReconstructionConfig, lambda_fbp, landweber

EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_IO = 4

PRESETS = {
    "ex1-compton": dict(
        profile="compton", a=0.01, b=2.83, c=2.0, extent=(-1.0, 1.0, 0.0, 2.0), delta_hw=0.015,
        phantom="delta:0,1",
    ),
    "ex2-bragg": dict(
        profile="bragg", a=0.01, b=2.83, c=2.0, extent=(-1.0, 1.0, 0.0, 2.0), delta_hw=0.015,
        phantom="delta:0,1",
    ),
    "ex4-sinusoid": dict(
        profile="sinusoid:0.1", a=0.01, b=3.77, c=20.0, extent=(-10.0, 10.0, 0.0, 20.0),
        delta_hw=0.15, phantom="delta:0,10",
    ),
}
APPENDIX_A = dict(x1_max=3.0, n1=300, n2=200, fd_step=1e-4)

PRESET_HELP = """presets:
  ex1-compton   q(r)=r;             image [-1,1]x[0,2];   E in (0,2.83), x0 in [-2,2]
  ex2-bragg     q(r)=r/sqrt(r^2+1); image [-1,1]x[0,2];   E in (0,2.83), x0 in [-2,2]
  ex4-sinusoid  q(r)=1.1r+sin r;    image [-10,10]x[0,20]; E in (0,3.77), x0 in [-20,20]
  appendixA     h_B' scan on (0,3]x(-1,1), 300x200 grid, finite-difference step 1e-4
The lower E edge of every preset is a=0.01 (E must stay positive).
"""

_DECIMAL = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


class UsageError(Exception):
    pass


def decimal(text):
    if not _DECIMAL.match(text.strip()):
        raise argparse.ArgumentTypeError(f"not a decimal literal: {text!r}")
    return float(text)


def decimal_list(n):
    def parse(text):
        parts = text.split(",")
        if len(parts) != n:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers")
        return tuple(decimal(p) for p in parts)

    return parse


def positive_int(text):
    if not re.fullmatch(r"\d+", text.strip()):
        raise argparse.ArgumentTypeError(f"not a nonnegative integer: {text!r}")
    return int(text)


def _add_geometry(p):
    p.add_argument("--preset", choices=sorted(PRESETS), default="ex1-compton")
    p.add_argument("--profile", help='override: compton, bragg, monomial:<a>, sinusoid:<eps>, bragg-offset:<x2>')
    p.add_argument("--a", type=decimal, help="lower E edge of the data rectangle")
    p.add_argument("--b", type=decimal, help="upper E edge of the data rectangle")
    p.add_argument("--c", type=decimal, help="x0 half-width of the data rectangle")
    p.add_argument("--extent", type=decimal_list(4), help="image extent x1min,x1max,x2min,x2max")
    p.add_argument("--nx", type=positive_int, default=128)
    p.add_argument("--ny", type=positive_int, default=128)
    p.add_argument("--nE", type=positive_int, default=128)
    p.add_argument("--nx0", type=positive_int, default=256)
    p.add_argument("--hq", type=decimal, help="quadrature step (default: half a pixel)")
    p.add_argument("--threads", type=positive_int, default=1)
    p.add_argument("--seed", type=positive_int, default=0)


def _setup(args):
    preset = PRESETS[args.preset]
    profile = parse_profile(args.profile or preset["profile"])
    geom = ScanGeometry(
        a=args.a if args.a is not None else preset["a"],
        b=args.b if args.b is not None else preset["b"],
        c=args.c if args.c is not None else preset["c"],
        image_extent=args.extent or preset["extent"],
        nx=args.nx, ny=args.ny, nE=args.nE, nx0=args.nx0, h_q=args.hq,
    )
    return preset, profile, geom


def _matrix(args, profile, geom):
    cache = getattr(args, "matrix_cache", None)
    if cache:
        try:
            return load_matrix(cache, profile, geom)
        except FileNotFoundError:
            pass
    M = build_system_matrix(profile, geom, threads=max(1, args.threads))
    if cache:
        save_matrix(M, cache)
    return M


def _phantom(args, preset):
    return parse_phantom(args.phantom or preset["phantom"], default_half_width=preset["delta_hw"])


# -- commands -------------------------------------------------------------


def cmd_simulate(args):
    preset, profile, geom = _setup(args)
    f = rasterize(_phantom(args, preset), geom)
    s = forward(_matrix(args, profile, geom), f)
    write_grid(s, args.out)
    print(f"wrote sinogram {geom.nE}x{geom.nx0} to {args.out}")


def cmd_reconstruct(args):
    preset, profile, geom = _setup(args)
    s = read_grid(args.sinogram)
    if not hasattr(s, "nE"):
        raise UsageError(f"{args.sinogram} is not a sinogram")
    geom = geom.with_resolution(geom.nx, geom.ny, s.nE, s.nx0)
    if tuple(s.extent) != geom.sinogram_extent:
        raise ConeTomoError(f"sinogram extent {s.extent} does not match geometry {geom.sinogram_extent}")
    M = _matrix(args, profile, geom)
    cfg = ReconstructionConfig(
        landweber_iters=args.iters,
        step="auto" if args.step is None else args.step,
        fbp_boundary=args.fbp_boundary,
    )
    if args.method == "fbp":
        img = lambda_fbp(M, s, cfg.fbp_boundary)
    else:
        res = landweber(M, s, cfg)
        img = res.image
        if res.divergence_risk:
            print(f"warning: step {res.step:g} exceeds 2/||M||^2; iteration may diverge", file=sys.stderr)
        if args.residuals:
            with open(args.residuals, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["iteration", "residual"])
                for k, r in enumerate(res.residuals):
                    w.writerow([k, repr(r)])
    write_grid(img, args.out)
    print(f"wrote {args.method} reconstruction to {args.out}")


def cmd_bolker(args):
    profile = parse_profile(args.profile)
    report = check_bolker(profile, args.r_min, args.r_max, args.n_samples)
    text = report.to_keyvalue() if args.format == "kv" else report.to_text()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_artifacts(args):
    preset, profile, geom = _setup(args)
    spec = _phantom(args, preset)
    if spec.kind == "delta":
        source = spec.center
    else:
        source = wavefront_samples(spec, args.n_wavefront)
    pred = predict_artifacts(profile, geom, source, x0_samples=args.x0_samples)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "xi1", "xi2", "amplitude", "r1", "r2", "E", "x0"])
        for p in pred.points:
            w.writerow([repr(float(v)) for v in (p.x1, p.x2, p.xi1, p.xi2, p.amplitude, p.r1, p.r2, p.E, p.x0)])
    if args.mask:
        write_grid(pred.mask, args.mask)
    print(f"{len(pred.points)} predicted artifact points")


def cmd_coverage(args):
    _, profile, geom = _setup(args)
    cov = coverage_map(profile, geom, args.point, args.n_angles)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["angle", "state"])
        for theta, state in cov:
            w.writerow([repr(theta), state.value])
    n_vis = sum(1 for _, s in cov if s.value == "visible")
    print(f"{n_vis}/{len(cov)} directions visible at {args.point}")


def cmd_appendix_a(args):
    m, grid = bragg_offset_bolker_scan(args.x1_max, args.n1, args.n2, args.fd_step)
    print(f"min h_B' = {m:.6f}")
    if args.out:
        write_grid(grid, args.out)


def cmd_phantom(args):
    preset, _, geom = _setup(args)
    write_grid(rasterize(_phantom(args, preset), geom), args.out)


def cmd_export_pgm(args):
    grid = read_grid(args.grid)
    if args.csv:
        export_csv(grid, args.out)
    else:
        export_pgm(grid, args.out, clip=args.clip)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="conetomo",
        description="Generalized cone (broken-ray) Radon transform toolkit.",
        epilog=PRESET_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="forward-project a phantom", epilog=PRESET_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_geometry(p)
    p.add_argument("--phantom", help='"delta:cx,cy[,hw]" or "disc:cx,cy,r"')
    p.add_argument("--matrix-cache")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="Lambda FBP or Landweber reconstruction")
    _add_geometry(p)
    p.add_argument("--method", choices=["fbp", "landweber"], required=True)
    p.add_argument("--sinogram", required=True)
    p.add_argument("--iters", type=positive_int, default=200)
    p.add_argument("--step", type=decimal)
    p.add_argument("--fbp-boundary", choices=["zero", "oneside"], default="zero")
    p.add_argument("--residuals", help="CSV file for the residual history")
    p.add_argument("--matrix-cache")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("bolker", help="check the Bolker condition for a profile")
    p.add_argument("--profile", required=True)
    p.add_argument("--r-min", type=decimal, default=0.01)
    p.add_argument("--r-max", type=decimal, default=30.0)
    p.add_argument("--n-samples", type=positive_int, default=20000)
    p.add_argument("--format", choices=["text", "kv"], default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bolker)

    p = sub.add_parser("artifacts", help="predict artifacts from non-injective g")
    _add_geometry(p)
    p.add_argument("--phantom")
    p.add_argument("--x0-samples", type=positive_int, default=2001)
    p.add_argument("--n-wavefront", type=positive_int, default=720)
    p.add_argument("--mask", help="CRGRID file for the rasterized artifact mask")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_artifacts)

    p = sub.add_parser("coverage", help="visible covector directions at a point")
    _add_geometry(p)
    p.add_argument("--point", type=decimal_list(2), required=True)
    p.add_argument("--n-angles", type=positive_int, default=360)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("appendix-a", help="offset Bragg curve Bolker scan")
    p.add_argument("--x1-max", type=decimal, default=APPENDIX_A["x1_max"])
    p.add_argument("--n1", type=positive_int, default=APPENDIX_A["n1"])
    p.add_argument("--n2", type=positive_int, default=APPENDIX_A["n2"])
    p.add_argument("--fd-step", type=decimal, default=APPENDIX_A["fd_step"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_appendix_a)

    p = sub.add_parser("phantom", help="rasterize a phantom")
    _add_geometry(p)
    p.add_argument("--phantom")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("export-pgm", help="export a grid as 16-bit PGM (or CSV)")
    p.add_argument("--grid", required=True)
    p.add_argument("--clip", type=decimal_list(2))
    p.add_argument("--csv", action="store_true", help="write CSV instead of PGM")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_pgm)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    np.random.seed(getattr(args, "seed", 0))
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"conetomo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GridFormatError, OSError) as exc:
        print(f"conetomo: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConeTomoError, ValueError) as exc:
        print(f"conetomo: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    return 0


if __name__ == "__main__":
    sys.exit(main())
