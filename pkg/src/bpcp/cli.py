"""Command line entry point: ``bpcp {solve,device,certify,bench,demo}``."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import asdict

import numpy as np

from . import certificate as cert
from .device import NoiseModel, delta_schedule, diagnostics, split
from .experiments import ExperimentSpec, run_grid, stream, write_records, write_tables
from .image_demo import DESK_FRAMES, DESK_SHAPE, FULL_FRAMES, FULL_SHAPE, coins_image, demo, write_outputs
from .matio import load_matrix, save_matrix
from .pgm import PgmError, load_pgm
from .solver import SolverConfig, default_lambda, solve_bpcp

EXIT_OK = 0
EXIT_IO = 1
EXIT_MAX_ITERS = 2


def _real_or(word):
    def parse(text):
        if text == word:
            return text
        return float(text)

    return parse


def _int_list(text):
    return [int(x) for x in text.split(",") if x]


def _str_list(text):
    return [x for x in text.split(",") if x]


def cmd_solve(args) -> int:
    try:
        y = load_matrix(args.input)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read {args.input}: {exc}", file=sys.stderr)
        return EXIT_IO
    n, t = y.shape
    lam = default_lambda(n, t, args.lambda_scale) if args.lam == "auto" else args.lam
    alpha = math.inf if args.alpha == "inf" else args.alpha
    config = SolverConfig(
        lam=lam,
        alpha=alpha,
        nu=args.nu,
        tol_feasibility=args.tol_feas,
        tol_progress=args.tol_prog,
        max_iters=args.max_iters,
        alpha_mode=args.alpha_mode,
        svd_mode=args.svd_mode,
    )
    res = solve_bpcp(y, config)
    try:
        if args.out_l:
            save_matrix(res.l_hat, args.out_l)
        if args.out_z:
            save_matrix(res.z_hat, args.out_z)
        if args.log:
            with open(args.log, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["iteration", "objective", "feasibility", "progress", "lagrangian", "rank"])
                writer.writerows(res.per_iteration_log)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    print(
        f"status={res.status} iterations={res.iterations} objective={res.objective:.10g} "
        f"feasibility={res.feasibility_residual:.3e} progress={res.progress_residual:.3e} "
        f"lambda={res.lam:.6g} nu={res.nu:.6g} alpha_satisfied={res.alpha_satisfied}"
    )
    return EXIT_OK if res.converged else EXIT_MAX_ITERS


def cmd_device(args) -> int:
    try:
        z0 = load_matrix(args.input)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read {args.input}: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.model == "gaussian":
        model = NoiseModel.gaussian(args.scale)
    elif args.model == "cauchy":
        model = NoiseModel.cauchy(args.scale)
    else:
        model = NoiseModel.empirical(z0)
    if args.delta_auto:
        delta = delta_schedule(min(z0.shape), args.mu, args.rank, args.c)
    else:
        delta = args.delta
    sp = split(z0, model, delta)
    rep = diagnostics(sp)
    rows = [("delta", delta), ("gamma_lo", sp.gamma_lo), ("gamma_hi", sp.gamma_hi)] + list(asdict(rep).items())
    for key, value in rows:
        print(f"{key}={value}")
    if args.report:
        try:
            with open(args.report, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["quantity", "value"])
                writer.writerows(rows)
        except OSError as exc:
            print(f"error: cannot write {args.report}: {exc}", file=sys.stderr)
            return EXIT_IO
    return EXIT_OK


CERT_COLUMNS = list(cert.CertificateReport.__dataclass_fields__)


def cmd_certify(args) -> int:
    if args.lam == "auto":
        probe = cert.sample_instance(args.n, args.t, args.r, args.delta, stream(args.seed, "certify", 0))
        mu, _ = cert.incoherence(probe.ts)
        lam = cert.rates(args.n, mu, args.r).lam
    else:
        lam = args.lam
    rows = []
    for k in range(args.seeds):
        inst = cert.sample_instance(args.n, args.t, args.r, args.delta, stream(args.seed, "certify", k))
        report, w_l, w_s = cert.certify_instance(inst, lam, eps=args.eps)
        rows.append([k, w_s is not None] + [getattr(report, c) for c in CERT_COLUMNS])
    passed = sum(row[CERT_COLUMNS.index("overlap_ok") + 2] for row in rows)
    print(f"lambda={lam:.6g} seeds={args.seeds} overlap_ok={passed}/{args.seeds}")
    if args.report:
        try:
            with open(args.report, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["seed", "ws_built"] + CERT_COLUMNS)
                writer.writerows(rows)
        except OSError as exc:
            print(f"error: cannot write {args.report}: {exc}", file=sys.stderr)
            return EXIT_IO
    return EXIT_OK


def cmd_bench(args) -> int:
    spec = ExperimentSpec(
        sizes=[(n, n) for n in args.sizes],
        ranks=args.ranks,
        noises=args.noise,
        lambda_scale=args.lambda_scale,
        replications=args.reps,
        seed=args.seed,
        max_iters=args.max_iters,
    )
    outs = args.out
    if len(outs) != 2:
        print("error: --out needs two comma-separated paths", file=sys.stderr)
        return EXIT_IO

    def progress(rec):
        logging.info("n=%d r=%d %s rep=%d mse=%.4f iters=%d", rec.n, rec.r, rec.noise, rec.rep,
                     rec.mse_per_entry, rec.iterations)

    result = run_grid(spec, workers=args.workers, progress=progress)
    try:
        write_tables(result, outs[0], outs[1])
        if args.records:
            write_records(result.records, args.records)
    except OSError as exc:
        print(f"error: cannot write tables: {exc}", file=sys.stderr)
        return EXIT_IO
    for c in result.cells.values():
        print(f"n={c.n} t={c.t} r={c.r} {c.noise:8s} mse={c.mse_mean:.4f}±{c.mse_stderr:.4f} "
              f"rel={c.rel_mean:.4f}±{c.rel_stderr:.4f} nonconverged={c.nonconverged}")
    return EXIT_OK


def cmd_demo(args) -> int:
    if args.image:
        try:
            image = load_pgm(args.image)
        except (OSError, PgmError) as exc:
            print(f"error: cannot read {args.image}: {exc}", file=sys.stderr)
            return EXIT_IO
    else:
        image = coins_image(*(FULL_SHAPE if args.full else DESK_SHAPE))
    frames = args.frames or (FULL_FRAMES if args.full else DESK_FRAMES)
    out = demo(image, frames=frames, noise_kind=args.noise, lambda_scale=args.lambda_scale, seed=args.seed,
               noise_scale=args.noise_scale, frame=args.frame)
    try:
        write_outputs(out, args.outdir)
    except OSError as exc:
        print(f"error: cannot write to {args.outdir}: {exc}", file=sys.stderr)
        return EXIT_IO
    m = out.metrics
    print(f"rel_error={m['rel_error']:.4g} sigma_ratio={m['sigma_ratio']:.3g} "
          f"residual_corr={m['residual_corr']:.3g} psnr={m['psnr_frame']:.2f}dB iterations={m['iterations']}")
    return EXIT_OK if out.result.converged else EXIT_MAX_ITERS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bpcp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="decompose a matrix file into low-rank and sparse parts")
    p.add_argument("--input", required=True, help="matrix file (.csv or binary)")
    p.add_argument("--lambda", dest="lam", type=_real_or("auto"), default="auto")
    p.add_argument("--lambda-scale", type=float, default=0.7)
    p.add_argument("--alpha", type=_real_or("inf"), default="inf")
    p.add_argument("--nu", type=_real_or("auto"), default="auto")
    p.add_argument("--tol-feas", type=float, default=1e-7)
    p.add_argument("--tol-prog", type=float, default=1e-5)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--alpha-mode", choices=("verify", "clip"), default="verify")
    p.add_argument("--svd-mode", choices=("full", "truncated", "validate"), default="full")
    p.add_argument("--out-l")
    p.add_argument("--out-z")
    p.add_argument("--log", help="per-iteration CSV log")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("device", help="split an error matrix at a quantile band")
    p.add_argument("--input", required=True)
    p.add_argument("--model", choices=("gaussian", "cauchy", "empirical"), default="gaussian")
    p.add_argument("--scale", type=float, default=1.0)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--delta", type=float)
    g.add_argument("--delta-auto", action="store_true", help="delta = c * mu * r / n^(1/3)")
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--rank", type=int, default=1)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--report")
    p.set_defaults(func=cmd_device)

    p = sub.add_parser("certify", help="build and check dual certificates on random instances")
    p.add_argument("--n", type=int, default=60)
    p.add_argument("--t", type=int, default=60)
    p.add_argument("--r", type=int, default=1)
    p.add_argument("--delta", type=float, default=0.3)
    p.add_argument("--lambda", dest="lam", type=_real_or("auto"), default="auto")
    p.add_argument("--eps", type=float, default=0.2)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("bench", help="run the simulation grid and write both tables")
    p.add_argument("--sizes", type=_int_list, default=[200, 300, 400, 500])
    p.add_argument("--ranks", type=_int_list, default=[1, 3, 5])
    p.add_argument("--noise", type=_str_list, default=["gaussian", "cauchy"])
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--lambda-scale", type=float, default=0.7)
    p.add_argument("--max-iters", type=int, default=200000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=_str_list, default=["table1.csv", "table2.csv"])
    p.add_argument("--records", help="per-replication CSV")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("demo", help="static-scene denoising demo")
    p.add_argument("--image", help="P5 PGM; default is a synthetic scene")
    p.add_argument("--frames", type=int)
    p.add_argument("--noise", choices=("gaussian", "cauchy"), default="cauchy")
    p.add_argument("--noise-scale", type=float, default=1.0)
    p.add_argument("--lambda-scale", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--full", action="store_true", help="242x308 scene with 200 frames")
    p.add_argument("--outdir", default="demo_out")
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
