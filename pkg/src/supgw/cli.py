"""Command-line driver.

Commands::

    supgw match X.csv Y.csv --out DIR [--rho R] [--baseline gw]
    supgw gw-baseline X.csv Y.csv --out DIR
    supgw cover-stats X.csv Y.csv --out DIR --rho R [--n-covers N]
    supgw sketch X.csv --out DIR (--box-size S | --target K | --method mapper --cube-size S)
    supgw recover X.csv Y.csv --sketch1 DIR1 --sketch2 DIR2 --coupling C.csv --out DIR

Inputs are CSV files holding one point per row (``--kind points``) or a
square distance matrix (``--kind distance``). A JSON file given with
``--config`` supplies defaults for any flag; flags given on the command
line win. Exit status is 0 on success (including convergence warnings)
and 2 on bad usage or input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .conflict import build_conflict_graph, select_zero_pattern
from .core import SolverParams
from .geometry import (DEFAULT_K, as_point_cloud, euclidean_distances, geodesic_distances,
                       normalize_distances)
from .sgw import GwProblem, solve_entropic_gw, solve_sgw
from .sketch import (RECOVERY_EPS, box_size_for_count, grid_sketch, mapper_sketch,
                     recover_full_coupling)

DUMP_TOL = 1e-9


class InputError(Exception):
    pass


# ---------------------------------------------------------------- file I/O

def read_matrix(path):
    """Numeric CSV as a 2-D float array; a single non-numeric header row is skipped."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: no such file")
    try:
        x = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError:
        try:
            x = np.loadtxt(path, delimiter=",", ndmin=2, skiprows=1)
        except ValueError as exc:
            raise InputError(f"{path}: not a numeric CSV ({exc})") from None
    if x.size == 0:
        raise InputError(f"{path}: empty file")
    return x


def write_coupling(path, p, dump_tol=DUMP_TOL):
    """Sparse ``i,j,value`` triplets for entries above ``dump_tol``, row-major."""
    ii, jj = np.nonzero(p > dump_tol)
    with open(path, "w") as fh:
        fh.write("i,j,value\n")
        for i, j in zip(ii.tolist(), jj.tolist()):
            fh.write(f"{i},{j},{p[i, j]:.17g}\n")
    return float(p[ii, jj].sum())


def read_coupling(path, shape=None):
    t = read_matrix(path)
    if t.shape[1] != 3:
        raise InputError(f"{path}: expected columns i,j,value")
    ii, jj = t[:, 0].astype(np.int64), t[:, 1].astype(np.int64)
    if np.any(ii < 0) or np.any(jj < 0):
        raise InputError(f"{path}: negative index")
    if shape is None:
        shape = (ii.max() + 1, jj.max() + 1)
    elif ii.max() >= shape[0] or jj.max() >= shape[1]:
        raise InputError(f"{path}: indices exceed the sketch sizes {shape}")
    p = np.zeros(shape)
    np.add.at(p, (ii, jj), t[:, 2])
    return p


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _finite(v):
    """JSON has no infinity; encode it as a string."""
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


# ---------------------------------------------------------------- inputs

def load_space(path, kind, metric, knn):
    """Return ``(distance matrix, points or None)``."""
    x = read_matrix(path)
    if kind == "distance":
        if x.shape[0] != x.shape[1]:
            raise InputError(f"{path}: distance matrix is {x.shape[0]}x{x.shape[1]}, not square")
        return x, None
    x = as_point_cloud(x)
    if metric == "euclidean" or len(x) == 1:
        return euclidean_distances(x), x
    return geodesic_distances(x, min(knn, len(x) - 1)), x


def solver_params(args, **over):
    kw = dict(epsilon=args.epsilon, gamma=args.gamma, tol_inner=args.tol_inner,
              tol_outer=args.tol_outer, max_inner=args.max_inner, max_outer=args.max_outer,
              seed=args.seed, n_covers=args.n_covers, prefix_max=args.prefix_max)
    kw.update(over)
    return SolverParams(**kw).with_eta(args.eta)


# ---------------------------------------------------------------- commands

def cmd_match(args):
    out = _outdir(args)
    timings = {}
    t0 = time.perf_counter()
    d1, x = load_space(args.input1, args.kind, args.metric, args.knn)
    d2, y = load_space(args.input2, args.kind, args.metric, args.knn)
    d1, d2 = normalize_distances(d1, d2)
    timings["distances"] = time.perf_counter() - t0
    params = solver_params(args)
    prob = GwProblem.uniform(d1, d2, args.rho)

    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if args.baseline == "gw":
            if not math.isfinite(args.rho):
                res = solve_entropic_gw(prob, params)
            else:
                raise InputError("--baseline gw ignores --rho; leave it unset")
        else:
            res = solve_sgw(prob, params)
    timings["solve"] = time.perf_counter() - t0

    p = res.coupling.p
    dumped = write_coupling(out / "coupling.csv", p, args.dump_tol)
    report = {
        "command": "match",
        "baseline": args.baseline,
        "n": prob.shape[0],
        "m": prob.shape[1],
        "mass": res.mass,
        "dumped_mass": dumped,
        "dump_tol": args.dump_tol,
        "rho": _finite(args.rho),
        "rho_max": prob.rho_max,
        "cover_size": int(res.pattern.size),
        "cover_mass": _finite(res.cover_mass),
        "cover_trials": [list(t) for t in res.cover_trials],
        "quadratic_trace": res.quadratic_trace,
        "objective_trace": res.objective_trace,
        "mass_trace": res.mass_trace,
        "inner_iters": res.inner_iters,
        "outer_iters": res.outer_iters,
        "converged": res.converged,
        "warnings": _dedupe(res.warnings),
        "seed": args.seed,
        "params": _param_dict(params),
        "timings": timings,
    }
    if args.plot and x is not None and y is not None:
        from .plotting import plot_matching
        plot_matching(x, y, p, out / "matching.svg", title=f"mass {res.mass:.4f}")
    write_json(out / "report.json", report)
    _say(args, f"mass {res.mass:.6f}, cover size {res.pattern.size}, "
               f"{res.outer_iters} outer iterations, converged={res.converged}")
    for w in report["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def cmd_cover_stats(args):
    out = _outdir(args)
    d1, _ = load_space(args.input1, args.kind, args.metric, args.knn)
    d2, _ = load_space(args.input2, args.kind, args.metric, args.knn)
    d1, d2 = normalize_distances(d1, d2)
    params = solver_params(args, prefix_max=args.prefix_max if args.prefix_max > 0 else 0.5)
    prob = GwProblem.uniform(d1, d2, args.rho)
    t0 = time.perf_counter()
    graph = build_conflict_graph(d1, d2, args.rho)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sel = select_zero_pattern(graph, prob.a, prob.b, params)
    elapsed = time.perf_counter() - t0
    sizes = np.array([t.size for t in sel.trials])
    masses = np.array([t.mass for t in sel.trials])
    with open(out / "covers.csv", "w") as fh:
        fh.write("cover_size,mass\n")
        for s, m in zip(sizes.tolist(), masses.tolist()):
            fh.write(f"{s},{m:.17g}\n")
    rho_s = float("nan")
    if np.ptp(sizes) > 0 and np.ptp(masses) > 0:
        rho_s = float(spearmanr(sizes, masses).statistic)
    if args.plot:
        from .plotting import plot_cover_stats
        plot_cover_stats(sizes, masses, out / "covers.svg", title=f"Spearman {rho_s:.3f}")
    write_json(out / "report.json", {
        "command": "cover-stats",
        "n_covers": len(sizes),
        "n_edges": graph.n_edges,
        "rho": _finite(args.rho),
        "rho_max": prob.rho_max,
        "best_mass": sel.mass,
        "best_size": int(sel.pattern.size),
        "minimal_fraction": sel.minimal_fraction,
        "spearman": None if math.isnan(rho_s) else rho_s,
        "seed": args.seed,
        "params": _param_dict(params),
        "timings": {"covers": elapsed},
    })
    _say(args, f"{len(sizes)} covers, best mass {sel.mass:.6f}, Spearman {rho_s:.3f}")
    return 0


def cmd_sketch(args):
    out = _outdir(args)
    x = as_point_cloud(read_matrix(args.input1))
    if args.method == "grid":
        if args.box_size is not None:
            box = args.box_size
        elif args.target is not None:
            box = box_size_for_count(x, args.target)
        else:
            raise InputError("grid sketch needs --box-size or --target")
        sk = grid_sketch(x, box, seed=args.seed)
    else:
        if args.cube_size is None:
            raise InputError("mapper sketch needs --cube-size")
        sk = mapper_sketch(x, args.cube_size, args.overlap, seed=args.seed, tol_merge=args.tol_merge)
    with open(out / "representatives.csv", "w") as fh:
        dims = ",".join(f"x{k}" for k in range(sk.coords.shape[1]))
        fh.write(f"representative_index,point_index,{dims}\n")
        for r, (idx, c) in enumerate(zip(sk.indices.tolist(), sk.coords.tolist())):
            fh.write(f"{r},{idx}," + ",".join(f"{v:.17g}" for v in c) + "\n")
    with open(out / "assignment.csv", "w") as fh:
        fh.write("point_index,representative_index\n")
        for i, r in enumerate(sk.assignment.tolist()):
            fh.write(f"{i},{r}\n")
    with open(out / "sketch_points.csv", "w") as fh:
        for c in sk.coords.tolist():
            fh.write(",".join(f"{v:.17g}" for v in c) + "\n")
    if args.plot:
        from .plotting import plot_sketch
        plot_sketch(x, sk, out / "sketch.svg")
    write_json(out / "report.json", {"command": "sketch", "method": sk.method, "n": len(x),
                                     "size": sk.size, "params": sk.params, "seed": args.seed})
    _say(args, f"{sk.method} sketch: {sk.size} representatives of {len(x)} points")
    return 0


def _load_sketch(directory, n_points):
    directory = Path(directory)
    reps = read_matrix(directory / "representatives.csv")
    assign = read_matrix(directory / "assignment.csv")
    idx = reps[:, 1].astype(np.int64)
    if np.any(idx < 0) or np.any(idx >= n_points):
        raise InputError(f"{directory}: representative indices exceed the {n_points} input points")
    if len(assign) != n_points:
        raise InputError(f"{directory}: assignment covers {len(assign)} points, input has {n_points}")
    if np.any(assign[:, 1] >= len(idx)):
        raise InputError(f"{directory}: assignment refers to a missing representative")
    return idx


def cmd_recover(args):
    out = _outdir(args)
    if not (args.sketch1 and args.sketch2 and args.coupling):
        raise InputError("recover needs --sketch1, --sketch2 and --coupling")
    t0 = time.perf_counter()
    d1, x = load_space(args.input1, args.kind, args.metric, args.knn)
    d2, y = load_space(args.input2, args.kind, args.metric, args.knn)
    d1, d2 = normalize_distances(d1, d2)
    idx1 = _load_sketch(args.sketch1, len(d1))
    idx2 = _load_sketch(args.sketch2, len(d2))
    p_hat = read_coupling(args.coupling, (len(idx1), len(idx2)))
    params = solver_params(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rec = recover_full_coupling(p_hat, d1[:, idx1], d2[:, idx2], params, eps=args.recovery_epsilon)
    p = rec.coupling.p
    dumped = write_coupling(out / "coupling.csv", p, args.dump_tol)
    if args.plot and x is not None and y is not None:
        from .plotting import plot_matching
        plot_matching(x, y, p, out / "matching.svg", title=f"recovered mass {rec.mass:.4f}")
    write_json(out / "report.json", {
        "command": "recover",
        "n": len(d1),
        "m": len(d2),
        "mass": rec.mass,
        "dumped_mass": dumped,
        "dump_tol": args.dump_tol,
        "unmatched_sketch_rows": rec.unmatched_rows,
        "unmatched_sketch_cols": rec.unmatched_cols,
        "converged": rec.sot.converged,
        "inner_iters": rec.sot.n_iter,
        "seed": args.seed,
        "timings": {"recover": time.perf_counter() - t0},
    })
    _say(args, f"recovered mass {rec.mass:.6f}")
    return 0


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _param_dict(params):
    d = dict(vars(params))
    d["dt"] = _finite(d["dt"])
    d["eta"] = params.eta
    return d


def _dedupe(items):
    return list(dict.fromkeys(items))


def _say(args, msg):
    if not args.quiet:
        print(msg)


# ---------------------------------------------------------------- parser

COMMANDS = {
    "match": cmd_match,
    "gw-baseline": cmd_match,
    "cover-stats": cmd_cover_stats,
    "sketch": cmd_sketch,
    "recover": cmd_recover,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with defaults for any flag")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--quiet", action="store_true")
    common.add_argument("--no-plot", dest="plot", action="store_false", help="skip SVG output")

    space = argparse.ArgumentParser(add_help=False)
    space.add_argument("--kind", choices=["points", "distance"], default="points")
    space.add_argument("--metric", choices=["geodesic", "euclidean"], default="geodesic",
                       help="distance used for point inputs")
    space.add_argument("--knn", type=int, default=DEFAULT_K)

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--rho", type=float, default=math.inf)
    solver.add_argument("--gamma", type=float, default=10.0)
    solver.add_argument("--eta", type=float, default=1.0)
    solver.add_argument("--epsilon", type=float, default=0.1)
    solver.add_argument("--n-covers", type=int, default=100)
    solver.add_argument("--prefix-max", type=float, default=0.0)
    solver.add_argument("--tol-inner", type=float, default=1e-7)
    solver.add_argument("--tol-outer", type=float, default=1e-6)
    solver.add_argument("--max-inner", type=int, default=10000)
    solver.add_argument("--max-outer", type=int, default=500)
    solver.add_argument("--dump-tol", type=float, default=DUMP_TOL)

    parser = argparse.ArgumentParser(prog="supgw", description="Supervised Gromov-Wasserstein matching.")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("match", "gw-baseline"):
        p = sub.add_parser(name, parents=[common, space, solver])
        p.add_argument("input1")
        p.add_argument("input2")
        p.add_argument("--baseline", choices=["sgw", "gw"], default="gw" if name == "gw-baseline" else "sgw")

    p = sub.add_parser("cover-stats", parents=[common, space, solver])
    p.add_argument("input1")
    p.add_argument("input2")

    p = sub.add_parser("sketch", parents=[common])
    p.add_argument("input1")
    p.add_argument("--method", choices=["grid", "mapper"], default="grid")
    p.add_argument("--box-size", type=float)
    p.add_argument("--target", type=int, help="grid sketch: aim for this many representatives")
    p.add_argument("--cube-size", type=float)
    p.add_argument("--overlap", type=float, default=0.25)
    p.add_argument("--tol-merge", type=float)

    p = sub.add_parser("recover", parents=[common, space, solver])
    p.add_argument("input1")
    p.add_argument("input2")
    p.add_argument("--sketch1", help="directory written by the sketch command")
    p.add_argument("--sketch2")
    p.add_argument("--coupling", help="sketch coupling CSV (i,j,value)")
    p.add_argument("--recovery-epsilon", type=float, default=RECOVERY_EPS)
    return parser, sub


def parse_args(argv=None):
    parser, sub = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(cfg, dict):
            parser.error("config must be a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        # config values become defaults, so explicit flags still win
        sub.choices[args.command].set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def main(argv=None):
    args = parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
