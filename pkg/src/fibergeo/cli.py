"""Batch command-line front end.

Reads fields and matrices from versioned JSON files, runs distances,
geodesics, alignments and projections, and writes one structured report
record per query: a tab-separated line of key=value pairs with the fixed
keys {query, value, lower_bound, method, iters, elapsed_ms}, numbers
printed with 12 significant digits.  Exit codes: 0 success, 2 malformed
input (the message names the offending field), 3 solver non-convergence
(a partial report is still emitted).

Timing is reported only with --timing so that identical invocations
produce byte-identical reports.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .errors import (
    ConvergenceError,
    FibergeoError,
    GramMismatchError,
    InputFormatError,
    InterpolationError,
    RankError,
    ShapeError,
)
from .fiber import (
    RANK_TOL,
    FullRankMatrix,
    PLPath,
    exp_map,
    geodesic_data,
    lower_bound,
    norm,
    volume_quarter,
)
from . import fieldfile as ff
from .fields import (
    field_exp,
    field_log,
    field_align,
    field_volume,
    metric_field,
    pointwise_distances,
)
from .quotient import SPDMatrix, polar_lift, sym_distance
from .solver import (
    SolverOptions,
    TangentMatrix,
    dist_to_singular,
    distance,
)

_REPORT_KEYS = ("query", "value", "lower_bound", "method", "iters", "elapsed_ms")


def _fmt(value):
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _emit(record, stream=None):
    stream = stream or sys.stdout
    parts = [f"{key}={_fmt(record[key])}" for key in _REPORT_KEYS]
    stream.write("\t".join(parts) + "\n")


def _options(args):
    restarts = args.restarts
    return SolverOptions(
        rank_tol=args.rank_tol,
        endpoint_tol=args.endpoint_tol,
        pl_segments=args.pl_segments,
        pl_sweeps=args.pl_iters,
        restarts=restarts if restarts is not None else 3,
        so_restarts=restarts if restarts is not None else 8,
        seed=args.seed,
    )


def _load(path):
    return ff.read_field_file(path)


def _load_point(path, rank_tol):
    mat = ff.single_matrix(_load(path), where=path)
    return FullRankMatrix(mat, rank_tol)


def _elapsed_ms(t0, args):
    if args.timing:
        return int(round(1000.0 * (time.perf_counter() - t0)))
    return 0


def _cmd_fiber_dist(args):
    opts = _options(args)
    a = _load_point(args.a, opts.rank_tol)
    b = _load_point(args.b, opts.rank_tol)
    t0 = time.perf_counter()
    res = distance(a, b, opts)
    _emit(
        {
            "query": f"fiber-dist({args.a},{args.b})",
            "value": res.value,
            "lower_bound": res.lower,
            "method": res.method,
            "iters": res.iterations,
            "elapsed_ms": _elapsed_ms(t0, args),
        }
    )
    if args.plot:
        _plot_route(a, b, res, args.plot)
    return 0


def _plot_route(a, b, res, out_path):
    from . import plots

    if isinstance(res.certificate, TangentMatrix):
        ts = np.linspace(0.0, 1.0, 33)
        data = geodesic_data(a, res.certificate)
        mats = [exp_map(a, data, t).entries for t in ts]
        speeds = np.full(ts.size, norm(a, res.certificate))
    elif isinstance(res.certificate, PLPath):
        controls = res.certificate.controls
        ts = np.linspace(0.0, 1.0, controls.shape[0])
        mats = list(controls)
        from .fiber import segment_lengths

        seg = segment_lengths(res.certificate)
        speeds = np.concatenate([[seg[0]], seg]) * controls.shape[0]
    else:
        ts = np.array([0.0, 1.0])
        mats = [a.entries, b.entries]
        speeds = np.array([0.0, 0.0])
    vols = [volume_quarter(mat) for mat in mats]
    plots.route_figure(ts, speeds, vols, res.lower, out_path)


def _cmd_fiber_geodesic(args):
    opts = _options(args)
    a = _load_point(args.a, opts.rank_tol)
    zeta_raw = ff.single_matrix(_load(args.zeta), where=args.zeta)
    if zeta_raw.shape != a.entries.shape:
        raise InputFormatError(
            f"{args.zeta}.records[0].matrix",
            f"tangent shape {zeta_raw.shape} does not match the base point",
        )
    t0 = time.perf_counter()
    data = geodesic_data(a, zeta_raw)
    ts = np.linspace(0.0, args.t_max, args.t_samples)
    mats, kept = [], []
    truncated = False
    for t in ts:
        if t >= data.blowup:
            truncated = True
            break
        try:
            mats.append(exp_map(a, data, float(t)).entries)
        except RankError:
            truncated = True
            break
        kept.append(float(t))
    record = {
        "query": f"fiber-geodesic({args.a},{args.zeta})",
        "value": norm(a, zeta_raw),
        "lower_bound": lower_bound(a.entries, mats[-1]) if mats else 0.0,
        "method": "exp",
        "iters": len(kept),
        "elapsed_ms": _elapsed_ms(t0, args),
    }
    _emit(record)
    if args.out and mats:
        ff.write_field_file(
            args.out,
            a.n,
            a.m,
            [f"t{i}" for i in range(len(kept))],
            np.ones(len(kept)),
            mats,
            metadata={"query": "fiber-geodesic", "t_values": kept},
        )
    if args.plot and mats:
        from . import plots

        plots.geodesic_figure(kept, mats, args.plot)
    if truncated:
        sys.stderr.write(
            f"fiber-geodesic: geodesic blows up at t0={data.blowup:.12g}; "
            f"emitted {len(kept)} of {args.t_samples} samples\n"
        )
        return 3
    return 0


def _load_pair_of_fields(args, opts):
    f1 = _load(args.f1)
    f2 = _load(args.f2)
    if getattr(args, "completion", False):
        a = ff.to_completion(f1, opts.rank_tol, where=args.f1)
        b = ff.to_completion(f2, opts.rank_tol, where=args.f2)
    else:
        a = ff.to_one_form(f1, opts.rank_tol, where=args.f1)
        b = ff.to_one_form(f2, opts.rank_tol, where=args.f2)
    return a, b


def _cmd_field_dist(args):
    opts = _options(args)
    a, b = _load_pair_of_fields(args, opts)
    t0 = time.perf_counter()
    dists, iters = pointwise_distances(a, b, opts)
    w = a.manifold.weights
    value = float(np.sqrt(np.sum(w * dists * dists)))
    lowers = np.array(
        [lower_bound(a.values[k], b.values[k]) for k in range(a.manifold.size)]
    )
    lower = float(np.sqrt(np.sum(w * lowers * lowers)))
    _emit(
        {
            "query": f"field-dist({args.f1},{args.f2})",
            "value": value,
            "lower_bound": lower,
            "method": "field-completion" if args.completion else "field",
            "iters": iters,
            "elapsed_ms": _elapsed_ms(t0, args),
        }
    )
    if args.plot:
        from . import plots

        plots.pointwise_distance_figure(
            a.manifold.point_ids, dists, w, args.plot
        )
    return 0


def _cmd_field_interp(args):
    opts = _options(args)
    if not 0.0 <= args.t <= 1.0:
        raise InputFormatError("--t", f"must be in [0, 1], got {args.t}")
    a, b = _load_pair_of_fields(args, opts)
    t0 = time.perf_counter()
    try:
        logs = field_log(a, b, opts)
    except InterpolationError as err:
        _emit(
            {
                "query": f"field-interp({args.f1},{args.f2})",
                "value": float("nan"),
                "lower_bound": 0.0,
                "method": "interp",
                "iters": err.index,
                "elapsed_ms": _elapsed_ms(t0, args),
            }
        )
        sys.stderr.write(f"field-interp: {err}\n")
        return 3
    out_field = field_exp(a, logs, args.t)
    w = a.manifold.weights
    speeds = np.array(
        [norm(a.point(k), logs[k]) for k in range(a.manifold.size)]
    )
    value = float(np.sqrt(np.sum(w * speeds * speeds)))
    _emit(
        {
            "query": f"field-interp({args.f1},{args.f2})",
            "value": value,
            "lower_bound": 0.0,
            "method": "interp",
            "iters": a.manifold.size,
            "elapsed_ms": _elapsed_ms(t0, args),
        }
    )
    if args.out:
        ff.write_one_form(args.out, out_field, metadata={"t": args.t})
    if args.plot:
        from . import plots

        plots.pointwise_distance_figure(
            a.manifold.point_ids, speeds, w, args.plot
        )
    return 0


def _cmd_align(args):
    opts = _options(args)
    f1 = _load(args.f1)
    f2 = _load(args.f2)
    a = ff.to_one_form(f1, opts.rank_tol, where=args.f1)
    b = ff.to_one_form(f2, opts.rank_tol, where=args.f2)
    t0 = time.perf_counter()
    try:
        rot = field_align(a, b, tol=args.tol)
    except GramMismatchError as err:
        ids = [a.manifold.point_ids[k] for k in err.indices]
        raise InputFormatError(
            f"{args.f1}/{args.f2} records {ids}",
            "induced metrics do not match; alignment undefined",
        ) from err
    residual = float(
        max(
            np.linalg.norm(a.values[k] - rot.values[k] @ b.values[k])
            for k in range(a.manifold.size)
        )
    )
    _emit(
        {
            "query": f"align({args.f1},{args.f2})",
            "value": residual,
            "lower_bound": 0.0,
            "method": "align",
            "iters": a.manifold.size,
            "elapsed_ms": _elapsed_ms(t0, args),
        }
    )
    if args.out:
        ff.write_rotation_field(args.out, rot)
    return 0


def _cmd_project_metric(args):
    opts = _options(args)
    f1 = _load(args.field)
    a = ff.to_one_form(f1, opts.rank_tol, where=args.field)
    t0 = time.perf_counter()
    g = metric_field(a)
    _emit(
        {
            "query": f"project-metric({args.field})",
            "value": field_volume(a),
            "lower_bound": 0.0,
            "method": "project",
            "iters": a.manifold.size,
            "elapsed_ms": _elapsed_ms(t0, args),
        }
    )
    if args.out:
        ff.write_metric_field(args.out, g)
    return 0


def _load_spd(path, rank_tol):
    mat = ff.single_matrix(_load(path), where=path)
    if mat.shape[0] != mat.shape[1]:
        raise InputFormatError(
            f"{path}.records[0].matrix", "expected a square (m x m) matrix"
        )
    return SPDMatrix(mat, rank_tol)


def _cmd_sym_dist(args):
    opts = _options(args)
    g = _load_spd(args.g1, opts.rank_tol)
    h = _load_spd(args.g2, opts.rank_tol)
    n = args.n if args.n is not None else g.m + 1
    t0 = time.perf_counter()
    value = sym_distance(g, h, n, opts)
    lower = lower_bound(polar_lift(g, n), polar_lift(h, n))
    _emit(
        {
            "query": f"sym-dist({args.g1},{args.g2})",
            "value": value,
            "lower_bound": lower,
            "method": "orbit",
            "iters": opts.so_restarts,
            "elapsed_ms": _elapsed_ms(t0, args),
        }
    )
    return 0


def _cmd_dist_to_singular(args):
    opts = _options(args)
    a = _load_point(args.a, opts.rank_tol)
    t0 = time.perf_counter()
    value = dist_to_singular(a)
    _emit(
        {
            "query": f"dist-to-singular({args.a})",
            "value": value,
            "lower_bound": lower_bound(a.entries, np.zeros_like(a.entries)),
            "method": "closed_form",
            "iters": 0,
            "elapsed_ms": _elapsed_ms(t0, args),
        }
    )
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--rank-tol", type=float, default=RANK_TOL,
        help="full-rank threshold: sigma_min > tol * max(sigma_max, 1)",
    )
    common.add_argument(
        "--endpoint-tol", type=float, default=1e-10,
        help="shooting endpoint residual tolerance",
    )
    common.add_argument(
        "--pl-segments", type=int, default=16,
        help="segment count for piecewise-linear path search",
    )
    common.add_argument(
        "--pl-iters", type=int, default=200,
        help="descent sweep budget for the PL shortener",
    )
    common.add_argument(
        "--restarts", type=int, default=None,
        help="seeded restarts (PL default 3, rotation search default 8)",
    )
    common.add_argument("--seed", type=int, default=0, help="base RNG seed")
    common.add_argument(
        "--timing", action="store_true",
        help="report wall-clock elapsed_ms (off by default so identical "
        "invocations are byte-identical)",
    )

    parser = argparse.ArgumentParser(
        prog="fibergeo",
        description="Distances, geodesics and alignments for full-rank "
        "matrix fields",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fiber-dist", parents=[common],
                       help="distance between two full-rank matrices")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--plot", help="write a route-profile figure (PNG)")
    p.set_defaults(func=_cmd_fiber_dist)

    p = sub.add_parser("fiber-geodesic", parents=[common],
                       help="sample the geodesic from a point and velocity")
    p.add_argument("a")
    p.add_argument("zeta")
    p.add_argument("--t-samples", type=int, default=17)
    p.add_argument("--t-max", type=float, default=1.0)
    p.add_argument("--out", help="write sampled points as a field file")
    p.add_argument("--plot", help="write a geodesic-profile figure (PNG)")
    p.set_defaults(func=_cmd_fiber_geodesic)

    p = sub.add_parser("field-dist", parents=[common],
                       help="L2 distance between two fields")
    p.add_argument("f1")
    p.add_argument("f2")
    p.add_argument("--completion", action="store_true",
                   help="canonicalize and use the completion distance")
    p.add_argument("--plot", help="write a pointwise-distance figure (PNG)")
    p.set_defaults(func=_cmd_field_dist)

    p = sub.add_parser("field-interp", parents=[common],
                       help="pointwise geodesic interpolation of fields")
    p.add_argument("f1")
    p.add_argument("f2")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--out", help="write the interpolated field")
    p.add_argument("--plot", help="write a pointwise-speed figure (PNG)")
    p.set_defaults(func=_cmd_field_interp)
    p.set_defaults(completion=False)

    p = sub.add_parser("align", parents=[common],
                       help="pointwise rotations carrying field 2 onto field 1")
    p.add_argument("f1")
    p.add_argument("f2")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out", help="write the rotation field")
    p.set_defaults(func=_cmd_align)

    p = sub.add_parser("project-metric", parents=[common],
                       help="pointwise induced metrics of a field")
    p.add_argument("field")
    p.add_argument("--out", help="write the metric field")
    p.set_defaults(func=_cmd_project_metric)

    p = sub.add_parser("sym-dist", parents=[common],
                       help="quotient distance between SPD matrices")
    p.add_argument("g1")
    p.add_argument("g2")
    p.add_argument("--n", type=int, default=None,
                   help="ambient row count of the lift (default m+1)")
    p.set_defaults(func=_cmd_sym_dist)

    p = sub.add_parser("dist-to-singular", parents=[common],
                       help="distance to the identified singular stratum")
    p.add_argument("a")
    p.set_defaults(func=_cmd_dist_to_singular)
    return parser


def run(argv=None):
    """Parse argv, dispatch a subcommand, and return the exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputFormatError as err:
        sys.stderr.write(f"error: {err}\n")
        return 2
    except (ShapeError, RankError, GramMismatchError) as err:
        sys.stderr.write(f"error: invalid input: {err}\n")
        return 2
    except (ConvergenceError, InterpolationError) as err:
        sys.stderr.write(f"error: solver failed: {err}\n")
        return 3
    except FibergeoError as err:  # residual library errors are input-ish
        sys.stderr.write(f"error: {err}\n")
        return 2


main = run


def entrypoint():
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
