"""Command-line surface: ``wregress`` with subcommands w2, fit, pca,
sample-paths, and counterexample.

Every command is deterministic given its flags and seed.  Exit codes are a
stable contract: 0 success, 2 parse failure, 3 dimension mismatch, 4
infeasible constraints, 5 size cap exceeded, 6 degenerate timestamps.
``counterexample`` exits 0 exactly when nonconvexity is detected on its
grid.  Tolerances and caps may come from a TOML file via ``--config``;
explicit flags win.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import fileio
from .errors import (
    DegenerateTimestampsError,
    DimensionError,
    InfeasibleError,
    SizeCapError,
    WregressError,
)
from .fileio import ParseError
from .gaussian import (
    GaussianCurve,
    build_sdp,
    fit_geodesic_1d,
    fit_means,
    gaussian_curve,
    solve_sdp,
)
from .measures import DiscreteMeasure, GaussianMeasure, pushforward_line, w2_discrete, w2_gaussian
from .mmot import DEFAULT_SIZE_CAP
from .regression import (
    fit_regression,
    nonconvexity_example,
    nonconvexity_probe,
    residual_cost,
    sample_paths,
)
from .wpca import fit_pca

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_DIMENSION = 3
EXIT_INFEASIBLE = 4
EXIT_SIZE_CAP = 5
EXIT_DEGENERATE = 6

_CONFIG_KEYS = ("epsilon", "tol", "max_iter", "size_cap", "step_size", "curve_grid")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as e:
        raise ParseError(f"cannot read config {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ParseError(f"config {path} is not valid TOML: {e}") from e
    unknown = set(doc) - set(_CONFIG_KEYS)
    if unknown:
        raise ParseError(f"config {path}: unknown keys {sorted(unknown)}")
    return doc


def _resolve_options(args) -> dict:
    """Merge built-in defaults, --config values, and explicit flags."""
    merged = {
        "epsilon": None,
        "tol": None,
        "max_iter": None,
        "size_cap": DEFAULT_SIZE_CAP,
        "step_size": 10.0,
        "curve_grid": None,
    }
    if getattr(args, "config", None):
        merged.update(_load_config(args.config))
    for key in _CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    if merged["max_iter"] is not None:
        merged["max_iter"] = int(merged["max_iter"])
    merged["size_cap"] = int(merged["size_cap"])
    return merged


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_w2(args) -> int:
    a = fileio.read_measure_file(args.file_a)
    b = fileio.read_measure_file(args.file_b)
    if type(a) is not type(b):
        raise ParseError("the two measures must share a kind")
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if isinstance(a, DiscreteMeasure):
        cost, plan = w2_discrete(a, b)
        if args.plan:
            with open(args.plan, "w") as fh:
                fh.write("i,j,weight\n")
                for i, j in zip(*np.nonzero(plan.matrix)):
                    fh.write(f"{i},{j},{_fmt(plan.matrix[i, j])}\n")
    else:
        if args.plan:
            raise ParseError("--plan requires discrete measures")
        cost = w2_gaussian(a, b)
    print(_fmt(cost))
    return EXIT_OK


def _discrete_curve(law, grid):
    rows = []
    for t in grid:
        marginal = pushforward_line(law, float(t))
        rows.append({"t": float(t), **fileio.measure_to_json(marginal)})
    return rows


def _fit_discrete(args, opts, times, measures, path) -> dict:
    dataset = fileio.timed_dataset(times, measures, path)
    constraints = fileio.read_pairwise_file(args.pairwise) if args.pairwise else ()
    solver = args.solver or "exact"
    if solver == "entropic" and opts["epsilon"] is None:
        raise ParseError("--solver entropic requires --epsilon")
    tol = opts["tol"] if opts["tol"] is not None else 1e-8
    max_iter = opts["max_iter"] if opts["max_iter"] is not None else 10**5
    result = fit_regression(
        dataset,
        solver=solver,
        epsilon=opts["epsilon"],
        constraints=constraints,
        tol=tol,
        max_iter=max_iter,
        size_cap=opts["size_cap"],
    )
    doc = {
        "command": "fit",
        "kind": "discrete",
        "solver": {
            "name": result.solver,
            "epsilon": opts["epsilon"],
            "tol": tol,
            "max_iter": max_iter,
            "size_cap": opts["size_cap"],
            "iterations": result.iterations,
            "converged": result.converged,
        },
        "cost": result.cost,
        "pi": fileio.law_to_json(result.law),
    }
    if opts["curve_grid"]:
        grid = _curve_grid(args, dataset.timestamps, opts["curve_grid"])
        doc["curve"] = _discrete_curve(result.law, grid)
    return doc


def _curve_grid(args, timestamps, k):
    lo, hi = float(np.min(timestamps)), float(np.max(timestamps))
    if getattr(args, "extrapolate", None):
        lo, hi = map(float, args.extrapolate)
    return np.linspace(lo, hi, int(k))


def _fit_gaussian(args, opts, times, measures, path) -> dict:
    dataset = fileio.gaussian_dataset(times, measures, path)
    m0, m1 = fit_means(dataset)
    mean_cost, *_ = residual_cost(dataset.timestamps, np.stack([m.mean for m in dataset.measures]))
    tol = opts["tol"] if opts["tol"] is not None else 1e-10
    max_iter = opts["max_iter"] if opts["max_iter"] is not None else 300_000
    problem = build_sdp(dataset)
    result = solve_sdp(
        problem,
        step_size=opts["step_size"],
        tol=tol,
        max_iter=max_iter,
    )
    curve = GaussianCurve.from_fit(result, (m0, m1))
    endpoint_cov = np.block(
        [[result.cov.c_x0, result.cov.s_x0x1], [result.cov.s_x0x1.T, result.cov.c_x1]]
    )
    # clamp solver-tolerance negatives so the written law is strictly PSD
    vals, vecs = np.linalg.eigh(0.5 * (endpoint_cov + endpoint_cov.T))
    endpoint_cov = (vecs * np.maximum(vals, 0.0)) @ vecs.T
    doc = {
        "command": "fit",
        "kind": "gaussian",
        "solver": {
            "name": "sdp",
            "step_size": opts["step_size"],
            "tol": tol,
            "max_iter": max_iter,
            "iterations": result.iterations,
            "converged": result.converged,
        },
        "cost": mean_cost + result.f_value,
        "mean_cost": mean_cost,
        "cov_cost": result.f_value,
        "sdp_objective": result.objective,
        "diagnostics": result.diagnostics,
        "means": {"m0": m0.tolist(), "m1": m1.tolist()},
        "cov_blocks": {
            "c_x0": result.cov.c_x0.tolist(),
            "c_x1": result.cov.c_x1.tolist(),
            "s_x0x1": result.cov.s_x0x1.tolist(),
        },
        "pi": {
            "kind": "gaussian",
            "d": dataset.dim,
            "mean": np.concatenate([m0, m1]).tolist(),
            "cov": endpoint_cov.tolist(),
        },
    }
    if dataset.dim == 1:
        sigma0, sigma1, geo_cost = fit_geodesic_1d(dataset)
        doc["geodesic"] = {"sigma0": sigma0, "sigma1": sigma1, "cost": geo_cost}
    if opts["curve_grid"]:
        grid = _curve_grid(args, dataset.timestamps, opts["curve_grid"])
        rows = []
        for t in grid:
            marginal = gaussian_curve(curve, float(t))
            rows.append({"t": float(t), **fileio.measure_to_json(marginal)})
        doc["curve"] = rows
        if args.density_grid and dataset.dim == 1:
            doc["density_grid"] = _density_rows(curve, grid, int(args.density_grid))
    return doc


def _density_rows(curve, grid, n_x) -> dict:
    marginals = [gaussian_curve(curve, float(t)) for t in grid]
    lo = min(m.mean[0] - 4.0 * np.sqrt(m.covariance[0, 0]) for m in marginals)
    hi = max(m.mean[0] + 4.0 * np.sqrt(m.covariance[0, 0]) for m in marginals)
    xs = np.linspace(lo, hi, n_x)
    rows = []
    for t, m in zip(grid, marginals):
        var = max(float(m.covariance[0, 0]), 1e-300)
        dens = np.exp(-0.5 * (xs - m.mean[0]) ** 2 / var) / np.sqrt(2.0 * np.pi * var)
        rows.append({"t": float(t), "density": dens.tolist()})
    return {"x": xs.tolist(), "rows": rows}


def _cmd_fit(args) -> int:
    opts = _resolve_options(args)
    kind, _, times, measures = fileio.read_dataset_file(args.dataset)
    if kind == "discrete":
        doc = _fit_discrete(args, opts, times, measures, args.dataset)
    else:
        doc = _fit_gaussian(args, opts, times, measures, args.dataset)
    _emit(doc, args.out)
    return EXIT_OK


def _cmd_pca(args) -> int:
    opts = _resolve_options(args)
    kind, _, times, measures = fileio.read_dataset_file(args.dataset)
    if kind != "discrete":
        raise ParseError("pca requires a discrete dataset")
    if any(t is not None for t in times) and not args.ignore_times:
        raise ParseError(
            "dataset carries timestamps; pass --ignore-times to fit them freely"
        )
    init = fileio.read_times_file(args.init) if args.init else None
    solver = args.solver or "exact"
    if solver == "entropic" and opts["epsilon"] is None:
        raise ParseError("--solver entropic requires --epsilon")
    state = fit_pca(
        measures,
        init=init,
        tol=opts["tol"] if opts["tol"] is not None else 1e-10,
        max_iter=opts["max_iter"] if opts["max_iter"] is not None else 100,
        solver=solver,
        epsilon=opts["epsilon"],
        size_cap=opts["size_cap"],
    )
    doc = {
        "command": "pca",
        "kind": "discrete",
        "solver": {
            "name": solver,
            "epsilon": opts["epsilon"],
            "size_cap": opts["size_cap"],
            "iterations": state.iteration,
            "converged": state.converged,
        },
        "cost": state.objective,
        "pi": fileio.law_to_json(state.law),
        "times": state.times.tolist(),
        "objective_per_iter": list(state.trace),
    }
    if opts["curve_grid"]:
        grid = np.linspace(float(state.times.min()), float(state.times.max()), int(opts["curve_grid"]))
        doc["curve"] = _discrete_curve(state.law, grid)
    _emit(doc, args.out)
    return EXIT_OK


def _cmd_sample_paths(args) -> int:
    law = fileio.read_endpoint_law_file(args.pi_file)
    out = sample_paths(law, args.n, args.seed)
    d = law.dim
    header = (
        [f"x0_{k}" for k in range(d)]
        + [f"x1_{k}" for k in range(d)]
        + ["likelihood"]
    )
    lines = [",".join(header)]
    for i in range(len(out)):
        row = [_fmt(v) for v in out.x0[i]] + [_fmt(v) for v in out.x1[i]] + [_fmt(out.likelihood[i])]
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_counterexample(args) -> int:
    law_a, law_b, dataset = nonconvexity_example()
    values, is_convex = nonconvexity_probe(law_a, law_b, dataset, grid_size=args.grid)
    print("s,objective")
    for s, f in values:
        print(f"{_fmt(s)},{_fmt(f)}")
    if is_convex:
        print("no midpoint-convexity violation detected on this grid")
        return 1
    for k in range(1, len(values) - 1):
        mid = 0.5 * (values[k - 1][1] + values[k + 1][1])
        if values[k][1] > mid + 1e-9:
            print(
                f"nonconvex: F({_fmt(values[k][0])}) = {_fmt(values[k][1])} "
                f"> {_fmt(mid)} = (F({_fmt(values[k - 1][0])}) + F({_fmt(values[k + 1][0])})) / 2"
            )
            break
    return EXIT_OK


def _emit(doc: dict, out) -> None:
    text = fileio.dumps_json(doc)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wregress",
        description="Regression and PCA for time-indexed probability distributions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("w2", help="squared Wasserstein distance between two measures")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.add_argument("--plan", help="write the optimal coupling as CSV (discrete only)")
    p.set_defaults(func=_cmd_w2)

    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="TOML file with default tolerances and caps")
    shared.add_argument("--solver", choices=["exact", "entropic"])
    shared.add_argument("--epsilon", type=float, help="entropic regularization strength")
    shared.add_argument("--tol", type=float, help="solver tolerance")
    shared.add_argument("--max-iter", dest="max_iter", type=int, help="iteration cap")
    shared.add_argument("--cap", dest="size_cap", type=int, help="plan-tensor size cap")
    shared.add_argument("--curve-grid", dest="curve_grid", type=int,
                        help="sample the fitted curve on this many grid times")
    shared.add_argument("--out", help="write the result file here (default stdout)")

    p = sub.add_parser("fit", parents=[shared], help="fit the regression curve to a dataset")
    p.add_argument("dataset")
    p.add_argument("--pairwise", help="JSON file with pairwise joint constraints")
    p.add_argument("--extrapolate", nargs=2, metavar=("LO", "HI"),
                   help="curve-grid range overriding [min t, max t]")
    p.add_argument("--step-size", dest="step_size", type=float,
                   help="splitting scale for the Gaussian covariance solve")
    p.add_argument("--density-grid", dest="density_grid", type=int,
                   help="evaluate 1D Gaussian curve densities on this many x points")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("pca", parents=[shared], help="fit the first principal line segment")
    p.add_argument("dataset")
    p.add_argument("--ignore-times", action="store_true",
                   help="discard timestamps present in the dataset")
    p.add_argument("--init", help="JSON file with initial projection times")
    p.set_defaults(func=_cmd_pca)

    p = sub.add_parser("sample-paths", help="draw endpoint pairs from a fitted law")
    p.add_argument("pi_file")
    p.add_argument("--n", type=int, required=True, help="number of draws")
    p.add_argument("--seed", type=int, required=True, help="random seed")
    p.add_argument("--out", help="write CSV here (default stdout)")
    p.set_defaults(func=_cmd_sample_paths)

    p = sub.add_parser("counterexample",
                       help="evaluate the built-in nonconvexity example on a grid")
    p.add_argument("--grid", type=int, default=11, help="number of grid points")
    p.set_defaults(func=_cmd_counterexample)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except DimensionError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIMENSION
    except InfeasibleError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SizeCapError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SIZE_CAP
    except DegenerateTimestampsError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (WregressError, ValueError, TypeError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
