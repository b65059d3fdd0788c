"""Command-line front end: ``geoshape {generate,evaluate,optimize,sweep,gradcheck}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .air import capacity_2d, evaluate, ghq_grid
from .constellation import KINDS, Constellation, excess_kurtosis, generate, load_csv, save_csv
from .fibre import FibreModel, snr_for_constellation
from .grad import fd_gradient
from .optim import OptimizerConfig, make_objective, multi_start

GRADCHECK_TOL = 1e-6
DEFAULT_FD_STEP = 1e-5


class UsageError(Exception):
    """Invalid command-line input; reported with exit status 2."""


@dataclass(frozen=True)
class SweepSpec:
    snr_list: tuple
    cardinalities: tuple
    n_pairs: int = 1
    metric: str = "gmi"
    symmetry: str = "orthant"
    fibre_c: float | None = None
    output_dir: Path | None = None

    def __post_init__(self):
        if not self.snr_list:
            raise ValueError("snr list must not be empty")
        if any(b <= a for a, b in zip(self.snr_list, self.snr_list[1:])):
            raise ValueError("snr list must be strictly increasing")
        for M in self.cardinalities:
            if M < 2 or M & (M - 1):
                raise ValueError(f"M={M} is not a power of two")
        if not self.cardinalities:
            raise ValueError("need at least one cardinality")


def _fmt(x: float) -> float:
    return round(float(x), 6)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _float_list(text: str) -> list[float]:
    """``"10,12,14"`` or ``"10:16:2"`` (inclusive stop)."""
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            start, stop = parts[:2]
            step = parts[2] if len(parts) == 3 else 1.0
            if step <= 0:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [start + k * step for k in range(n)]
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number list {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer list {text!r}") from None


def _load_or_generate(args) -> Constellation:
    if args.constellation:
        return load_csv(args.constellation)
    if args.m is None:
        raise UsageError("give --constellation FILE or --m M")
    return generate(args.kind, args.m, args.pairs, seed=args.seed)


def _grid(args, c: Constellation):
    return ghq_grid(args.ghq_order, c.dims)


def _start_set(kinds, M, n_pairs, seed, symmetric):
    starts = []
    m = M.bit_length() - 1
    for k in kinds:
        if k == "square" and m % (2 * n_pairs):
            k = "lattice"
        starts.append(generate(k, M, n_pairs, seed=seed, symmetric=symmetric))
    return starts


def _fibre(args) -> FibreModel | None:
    if args.fibre_c is None:
        return None
    snr = args.fibre_snr_gaussian_db if args.fibre_snr_gaussian_db is not None else args.snr_db
    if snr is None:
        raise UsageError("--fibre-c needs --fibre-snr-gaussian-db or --snr-db")
    return FibreModel(args.fibre_c, snr)


def cmd_generate(args) -> int:
    c = generate(args.kind, args.m, args.pairs, seed=args.seed,
                 label_basis=args.label_basis, symmetric=args.symmetric)
    out = Path(args.output or f"{args.kind}_M{args.m}_N{args.pairs}.csv")
    save_csv(c, out, {"kind": args.kind, "seed": args.seed})
    print(out)
    return 0


def cmd_evaluate(args) -> int:
    c = _load_or_generate(args)
    fibre = _fibre(args)
    extra = {}
    if fibre is not None:
        if c.n_pairs != 1:
            raise UsageError("--fibre-c needs a 2D constellation")
        phi = excess_kurtosis(c)
        snr = snr_for_constellation(fibre, phi)
        extra = {"excess_kurtosis": _fmt(phi), "fibre_c": fibre.c,
                 "snr_gaussian_db": fibre.snr_gaussian_db}
    elif args.snr_db is None:
        raise UsageError("--snr-db is required")
    else:
        snr = args.snr_db
    rep = evaluate(c, snr, _grid(args, c), jobs=args.jobs)
    out = {
        **extra,
        "M": c.M,
        "n_pairs": c.n_pairs,
        "snr_db": _fmt(snr),
        "mi": _fmt(rep.mi),
        "gmi": _fmt(rep.gmi),
        "capacity_2d": _fmt(rep.capacity_2d),
        "gap_gmi": _fmt(rep.gap_gmi),
        "gap_mi": _fmt(c.n_pairs * rep.capacity_2d - rep.mi),
        "metric": args.metric,
        "value": _fmt(rep.mi if args.metric == "mi" else rep.gmi),
        "ghq_order": args.ghq_order,
    }
    _emit(args, _dump(out) + "\n")
    return 0


def _emit(args, text: str):
    if getattr(args, "output", None):
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _optimize_cell(M, n_pairs, snr_db, metric, symmetry, kinds, seed, fibre, ghq_order,
                   max_iters, jobs=1):
    dims = 2 * n_pairs
    cfg = OptimizerConfig(symmetry=symmetry, max_iters=max_iters)
    grid = ghq_grid(ghq_order, dims)
    obj = make_objective(metric, snr_db=snr_db, fibre=fibre, grid=grid, jobs=jobs)
    starts = _start_set(kinds, M, n_pairs, seed, symmetric=symmetry == "orthant")
    best, trace = multi_start(starts, obj, cfg)
    return best, trace, obj(best).value


def cmd_optimize(args) -> int:
    kinds = [k.strip() for k in args.starts.split(",") if k.strip()]
    for k in kinds:
        if k not in KINDS:
            raise UsageError(f"unknown start kind {k!r}")
    fibre = _fibre(args)
    if fibre is None and args.snr_db is None:
        raise UsageError("--snr-db is required")
    t0 = time.perf_counter()
    best, trace, value = _optimize_cell(args.m, args.pairs, args.snr_db, args.metric,
                                        args.symmetry, kinds, args.seed, fibre,
                                        args.ghq_order, args.max_iters, args.jobs)
    elapsed = time.perf_counter() - t0
    out = Path(args.output or f"opt_M{args.m}_N{args.pairs}_{args.metric}.csv")
    design_snr = fibre.snr_gaussian_db if fibre else args.snr_db
    save_csv(best, out, {"design_snr_db": design_snr, "metric": args.metric,
                         "kind": "optimised", "seed": args.seed,
                         "start": kinds[trace.start_index],
                         "fibre_c": fibre.c if fibre else None})
    trace_path = out.with_name(out.stem + "_trace.csv")
    trace.to_csv(trace_path)
    summary = {
        "constellation": str(out),
        "trace": str(trace_path),
        "metric": args.metric,
        "value": _fmt(value),
        "start": kinds[trace.start_index],
        "iterations": trace.records[-1].iter,
        "objective_evals": trace.n_objective_evals,
    }
    print(_dump(summary))
    print(f"finished in {elapsed:.1f} s", file=sys.stderr)
    return 0


def cmd_sweep(args) -> int:
    try:
        spec = SweepSpec(tuple(args.snr_db), tuple(args.m), args.pairs, args.metric,
                         args.symmetry, args.fibre_c,
                         Path(args.output) if args.output else None)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    kinds = [k.strip() for k in args.starts.split(",") if k.strip()]
    cells = [(M, s) for M in spec.cardinalities for s in spec.snr_list]

    def run(cell):
        M, snr = cell
        fibre = FibreModel(spec.fibre_c, snr) if spec.fibre_c is not None else None
        t0 = time.perf_counter()
        try:
            best, _, value = _optimize_cell(M, spec.n_pairs, snr, spec.metric, spec.symmetry,
                                            kinds, args.seed, fibre, args.ghq_order,
                                            args.max_iters)
        except Exception as exc:  # a failed cell is reported, the sweep goes on
            warnings.warn(f"cell M={M}, snr={snr} dB failed: {exc}", RuntimeWarning)
            return M, snr, math.nan, math.nan, time.perf_counter() - t0, None
        gap = spec.n_pairs * capacity_2d(snr) - value
        return M, snr, value, gap, time.perf_counter() - t0, best

    with ThreadPoolExecutor(max(1, args.jobs)) as pool:
        rows = list(pool.map(run, cells))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["M", "snr_db", spec.metric, "gap", "wall_time_s"])
    for M, snr, value, gap, wall, _ in rows:
        w.writerow([M, f"{snr:g}", f"{value:.6f}", f"{gap:.6f}", f"{wall:.3f}"])
    if spec.output_dir is not None:
        spec.output_dir.mkdir(parents=True, exist_ok=True)
        (spec.output_dir / "sweep.csv").write_text(buf.getvalue())
        for M, snr, _, _, _, best in rows:
            if best is not None:
                save_csv(best, spec.output_dir / f"M{M}_snr{snr:g}.csv",
                         {"design_snr_db": snr, "metric": spec.metric, "kind": "optimised",
                          "seed": args.seed})
    else:
        sys.stdout.write(buf.getvalue())
    return 1 if all(math.isnan(r[2]) for r in rows) else 0


def cmd_gradcheck(args) -> int:
    c = _load_or_generate(args)
    if args.fd_step <= 0:
        raise UsageError("--fd-step must be positive")
    fibre = _fibre(args)
    if fibre is None and args.snr_db is None:
        raise UsageError("--snr-db is required")
    obj = make_objective(args.metric, snr_db=args.snr_db, fibre=fibre, grid=_grid(args, c))
    analytic = obj(c).grad
    numeric = fd_gradient(obj, c, args.fd_step)
    scale = float(np.max(np.abs(numeric)))
    err = float(np.max(np.abs(analytic - numeric)))
    rel = err / scale if scale > 0 else err
    passed = rel < GRADCHECK_TOL
    report = {
        "M": c.M,
        "n_pairs": c.n_pairs,
        "metric": args.metric,
        "objective": "nonlinear" if fibre else "awgn",
        "fd_step": args.fd_step,
        "max_abs_err": err,
        "max_rel_err": rel,
        "tolerance": GRADCHECK_TOL,
        "pass": passed,
    }
    _emit(args, _dump(report) + "\n")
    if passed:
        return 0
    if args.fd_step != DEFAULT_FD_STEP:
        print(f"warning: max_rel_err {rel:.3g} above {GRADCHECK_TOL:g} with non-default "
              f"--fd-step {args.fd_step:g} (diagnostic only)", file=sys.stderr)
        return 0
    return 1


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--ghq-order", type=int, default=10, help="quadrature nodes per dimension")
    p.add_argument("--jobs", type=int, default=1, help="worker threads")
    p.add_argument("-o", "--output", help="output file (or directory for sweep)")
    return p


def _source_args(p):
    p.add_argument("--constellation", help="constellation CSV")
    p.add_argument("--kind", choices=KINDS, default="gaussian",
                   help="generated constellation when no file is given")
    p.add_argument("--m", type=int, help="number of points for a generated constellation")
    p.add_argument("--pairs", type=int, default=1, help="coordinate pairs N")


def _fibre_args(p):
    p.add_argument("--fibre-c", type=float, help="eta ratio c; enables the nonlinear objective")
    p.add_argument("--fibre-snr-gaussian-db", type=float,
                   help="SNR of a Gaussian-modulated signal at optimum launch power")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geoshape",
                                     description="Geometric constellation shaping toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    p = sub.add_parser("generate", parents=[common], help="write a starting constellation")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--pairs", type=int, default=1)
    p.add_argument("--label-basis", choices=("cartesian", "spherical"))
    p.add_argument("--symmetric", action="store_true",
                   help="mirror gaussian draws into every orthant")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", parents=[common], help="MI/GMI report as JSON")
    _source_args(p)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--metric", choices=("mi", "gmi"), default="gmi")
    _fibre_args(p)
    p.set_defaults(func=cmd_evaluate)

    opt_common = argparse.ArgumentParser(add_help=False)
    opt_common.add_argument("--pairs", type=int, default=1)
    opt_common.add_argument("--metric", choices=("mi", "gmi"), default="gmi")
    opt_common.add_argument("--symmetry", choices=("none", "orthant"), default="orthant")
    opt_common.add_argument("--starts", default="square,ring,gaussian",
                            help="comma-separated start kinds")
    opt_common.add_argument("--max-iters", type=int, default=10_000)

    p = sub.add_parser("optimize", parents=[common, opt_common], help="optimise one constellation")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--snr-db", type=float)
    _fibre_args(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", parents=[common, opt_common],
                       help="gap-to-capacity table over M and SNR")
    p.add_argument("--m", type=_int_list, required=True, help="e.g. 16,64")
    p.add_argument("--snr-db", type=_float_list, required=True, help="e.g. 10,12 or 10:16:1")
    p.add_argument("--fibre-c", type=float, help="optimise the nonlinear objective per cell")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", parents=[common], help="analytic vs finite-difference gradient")
    _source_args(p)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--metric", choices=("mi", "gmi"), default="gmi")
    p.add_argument("--fd-step", type=float, default=DEFAULT_FD_STEP)
    _fibre_args(p)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:
        print(f"geoshape {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"geoshape {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
