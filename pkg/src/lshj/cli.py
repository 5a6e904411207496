"""Command-line front end: ``lshj {gen, solve, compare, bench}``.

Every command accepts ``--config FILE`` holding a JSON object whose keys are
the long option names (dashes or underscores); explicit flags override file
keys.  Exit status is 0 on success, 1 when the solver does not converge and 2
on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .density import DensityError, DensityModel, sample_density
from .geometry import (BoundarySpec, Domain, GeometryError, Stencil, build_grid_cloud,
                       build_knn_cloud)
from .io import FormatError, read_cloud_csv, read_field_csv, write_cloud_csv, write_field_csv, write_json
from .oracles import OracleError, brute_tukey_depth, exact_distance_field, l1_error, linf_error
from .schemes import SchemeError, SchemeSpec
from .solver import SolverError, coarse_to_fine, resolve_threads, solve

EXIT_OK, EXIT_NONCONVERGED, EXIT_USAGE = 0, 1, 2

DEFAULTS = {
    "gen": {"density": None, "n": 1000, "dim": 2, "seed": 0, "grid": None, "stencil": "7",
            "k": 20, "eps": None, "out": "cloud.csv", "manifest": None},
    "solve": {"problem": "eikonal", "alpha": 1.0, "f": "1", "density": None, "estimator": "auto",
              "grid": None, "stencil": "7", "cloud": None, "dim": None, "n": 1000, "k": 20,
              "eps": None, "tol": 3e-3, "max_sweeps": 1000, "seed": 0, "init": "zero",
              "dirichlet": 0.0, "out": "field.csv", "report": "report.json", "threads": None},
    "compare": {"a": None, "b": None, "oracle": None, "out": "compare.json", "diff": None},
    "bench": {"suite": None, "out": "bench.csv", "sizes": None, "densities": None, "seed": 0,
              "max_sweeps": 1000, "threads": None},
}

SUITES = ("tukey-grid", "eikonal-cloud-2d", "eikonal-cloud-3d", "tukey-cloud", "affine-grid")


class UsageError(ValueError):
    pass


USAGE_ERRORS = (UsageError, FormatError, GeometryError, DensityError, SchemeError, OracleError,
                FileNotFoundError, IsADirectoryError, json.JSONDecodeError)


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="lshj", description="Quasiconcave viscosity solutions of level-set-convex HJ equations.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    S = argparse.SUPPRESS

    g = sub.add_parser("gen", help="sample a point cloud or lay out a grid")
    g.add_argument("--config")
    g.add_argument("--density", default=S, help="indicator shape to sample uniformly (e.g. circle, unit_square)")
    g.add_argument("--n", type=int, default=S)
    g.add_argument("--dim", type=int, default=S)
    g.add_argument("--seed", type=int, default=S)
    g.add_argument("--grid", default=S, help="grid dims such as 64x64")
    g.add_argument("--stencil", default=S, help="width (7) or ring:K")
    g.add_argument("--k", type=int, default=S, help="neighbors used for the manifest h and dtheta")
    g.add_argument("--eps", type=float, default=S, help="boundary band width (default 2h)")
    g.add_argument("--out", default=S)
    g.add_argument("--manifest", default=S)

    s = sub.add_parser("solve", help="solve on a grid or point cloud")
    s.add_argument("--config")
    s.add_argument("--problem", default=S, choices=("eikonal", "tukey", "mc2d", "alpha", "mc3d", "gauss3d"))
    s.add_argument("--alpha", type=float, default=S)
    s.add_argument("--f", default=S, help="constant or indicator shape name")
    s.add_argument("--density", default=S, help="tukey density: indicator shape name or kde")
    s.add_argument("--estimator", default=S, choices=("auto", "grid", "analytic", "mc"))
    s.add_argument("--grid", default=S)
    s.add_argument("--stencil", default=S)
    s.add_argument("--cloud", default=S, help="point-cloud CSV")
    s.add_argument("--dim", type=int, default=S)
    s.add_argument("--n", type=int, default=S)
    s.add_argument("--k", type=int, default=S)
    s.add_argument("--eps", type=float, default=S)
    s.add_argument("--tol", type=float, default=S)
    s.add_argument("--max-sweeps", type=int, default=S)
    s.add_argument("--seed", type=int, default=S)
    s.add_argument("--init", default=S, help="zero, a constant, or a coarse solution field CSV")
    s.add_argument("--dirichlet", type=float, default=S)
    s.add_argument("--out", default=S)
    s.add_argument("--report", default=S)
    s.add_argument("--threads", type=int, default=S)

    c = sub.add_parser("compare", help="L1/Linf difference of two fields or a field and an oracle")
    c.add_argument("--config")
    c.add_argument("--a", default=S)
    c.add_argument("--b", default=S)
    c.add_argument("--oracle", default=S, help="tukey:SHAPE or distance:SHAPE")
    c.add_argument("--out", default=S)
    c.add_argument("--diff", default=S)

    b = sub.add_parser("bench", help="run a named table suite")
    b.add_argument("--config")
    b.add_argument("--suite", default=S, help=", ".join(SUITES))
    b.add_argument("--out", default=S)
    b.add_argument("--sizes", default=S, help="comma-separated override of the suite sizes")
    b.add_argument("--densities", default=S, help="comma-separated override of the suite shapes")
    b.add_argument("--seed", type=int, default=S)
    b.add_argument("--max-sweeps", type=int, default=S)
    b.add_argument("--threads", type=int, default=S)
    return p


def resolve_config(args):
    """Defaults, then the ``--config`` file, then explicit flags."""
    cmd = args.command
    cfg = dict(DEFAULTS[cmd])
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        for key, val in loaded.items():
            key = key.replace("-", "_")
            if key not in cfg:
                raise UsageError(f"unknown config key {key!r} for {cmd}")
            cfg[key] = val
    cfg.update(flags)
    return cfg


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def parse_dims(text, dim=None):
    parts = [int(x) for x in str(text).lower().split("x")]
    if len(parts) == 1 and dim:
        parts = parts * int(dim)
    if any(m < 3 for m in parts):
        raise UsageError(f"bad grid {text!r}")
    return tuple(parts)


def named_density(name, dim):
    try:
        return DensityModel.named(str(name), dim)
    except DensityError as exc:
        raise UsageError(str(exc)) from None


def _f_spec(text, dim):
    try:
        return float(text)
    except (TypeError, ValueError):
        return named_density(text, dim)


def _manifest(cloud, seed, cfg):
    return {"n": cloud.n, "d": cloud.dim, "k": cloud.n_neighbors, "h": cloud.h,
            "dtheta": cloud.dtheta, "boundary_nodes": int(cloud.boundary_mask.sum()),
            "seed": seed, "config": cfg}


def build_cloud(cfg):
    """Grid from ``grid``/``stencil``, or kNN graph from ``cloud`` CSV (or a fresh uniform sample)."""
    if cfg.get("grid"):
        dims = parse_dims(cfg["grid"], cfg.get("dim"))
        stencil = Stencil.parse(cfg.get("stencil") or "7", len(dims))
        return build_grid_cloud(dims, stencil)
    if cfg.get("cloud"):
        pts, bnd = read_cloud_csv(cfg["cloud"])
    else:
        d = int(cfg.get("dim") or 2)
        pts = np.random.default_rng(cfg.get("seed", 0)).uniform(0.0, 1.0, (int(cfg["n"]), d))
        bnd = None
    if bnd is not None:
        spec = BoundarySpec(mask=bnd)
    else:
        spec = BoundarySpec(domain=Domain.unit_box(pts.shape[1]), eps=cfg.get("eps"))
    return build_knn_cloud(pts, int(cfg.get("k") or 20), spec)


def build_spec(cfg, cloud):
    problem = cfg["problem"]
    d = cloud.dim
    seed = int(cfg.get("seed") or 0)
    if problem == "tukey":
        name = cfg.get("density")
        if not name:
            raise UsageError("tukey needs --density")
        model = DensityModel.kde(cloud.points) if name == "kde" else named_density(name, d)
        return SchemeSpec.tukey(model, estimator=cfg.get("estimator", "auto"), mc_seed=seed)
    f = _f_spec(cfg.get("f", 1.0), d)
    if problem == "eikonal":
        return SchemeSpec.eikonal(f)
    if problem == "mc2d":
        return SchemeSpec.mc2d(f)
    if problem == "alpha":
        return SchemeSpec.alpha_flow(float(cfg.get("alpha", 1.0)), f)
    if problem == "mc3d":
        return SchemeSpec.mc3d(f)
    if problem == "gauss3d":
        return SchemeSpec.gauss3d(f)
    raise UsageError(f"unknown problem {problem!r}")


def _coarse_init(path, fine, dirichlet):
    _, pts, vals = read_field_csv(path)
    d = pts.shape[1]
    if d != fine.dim:
        raise UsageError("initial field dimension does not match the cloud")
    axes = [np.unique(pts[:, a]) for a in range(d)]
    dims = tuple(len(ax) for ax in axes)
    lattice = int(np.prod(dims)) == len(pts) and min(dims) >= 3
    if fine.is_grid and lattice:
        coarse = build_grid_cloud(dims, Stencil.wide(3, d))
        # reorder the values into the lattice node order
        order = np.lexsort(pts.T[::-1])
        vals = vals[order]
    else:
        coarse = build_knn_cloud(pts, 1)
    return coarse_to_fine(None, coarse, fine, vals, dirichlet=dirichlet)


def init_values(cfg, cloud):
    init = cfg.get("init", "zero")
    if init in (None, "zero", 0, 0.0):
        return 0.0
    try:
        return float(init)
    except (TypeError, ValueError):
        pass
    if not Path(str(init)).exists():
        raise UsageError(f"init must be zero, a number or an existing field CSV, got {init!r}")
    return _coarse_init(init, cloud, float(cfg.get("dirichlet", 0.0)))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_gen(cfg):
    seed = int(cfg["seed"])
    if cfg.get("grid"):
        dims = parse_dims(cfg["grid"], cfg.get("dim"))
        cloud = build_grid_cloud(dims, Stencil.parse(cfg["stencil"], len(dims)))
    else:
        d = int(cfg["dim"])
        model = named_density(cfg.get("density") or "unit_square", d)
        pts = sample_density(model, int(cfg["n"]), seed=seed)
        cloud = build_knn_cloud(pts, int(cfg["k"]),
                                BoundarySpec(domain=_support_domain(model), eps=cfg.get("eps")))
    out = cfg["out"]
    write_cloud_csv(out, cloud.points, cloud.boundary_mask)
    manifest = cfg.get("manifest") or str(Path(out).with_suffix(".json"))
    write_json(manifest, _manifest(cloud, seed, cfg))
    return EXIT_OK


def cmd_solve(cfg):
    cfg["threads"] = resolve_threads(cfg.get("threads"))
    if float(cfg["tol"]) <= 0:
        raise UsageError("tol must be positive")
    cloud = build_cloud(cfg)
    spec = build_spec(cfg, cloud)
    init = init_values(cfg, cloud)
    seed = int(cfg.get("seed") or 0)
    status = EXIT_OK
    try:
        report = solve(spec, cloud, dirichlet=float(cfg.get("dirichlet", 0.0)), init=init,
                       tol=float(cfg["tol"]), max_sweeps=int(cfg["max_sweeps"]), threads=cfg["threads"])
    except SolverError as exc:
        write_json(cfg["report"], {"error": str(exc), "converged": False, "config": cfg, "seed": seed})
        print(f"lshj: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    write_field_csv(cfg["out"], cloud.points, report.final_field)
    write_json(cfg["report"], report.to_dict(seed=seed, config=cfg))
    if not report.converged:
        print(f"lshj: no convergence after {report.iterations} sweeps "
              f"(residual {report.residual:.3e})", file=sys.stderr)
        status = EXIT_NONCONVERGED
    return status


def oracle_values(text, points):
    """``tukey:SHAPE`` or ``distance:SHAPE`` evaluated at ``points``."""
    try:
        kind, name = str(text).split(":", 1)
    except ValueError:
        raise UsageError(f"oracle must look like tukey:SHAPE or distance:SHAPE, got {text!r}") from None
    model = named_density(name, points.shape[1])
    if kind == "tukey":
        return brute_tukey_depth(model, points)
    if kind == "distance":
        return exact_distance_field(model, points).values
    raise UsageError(f"unknown oracle kind {kind!r}")


def cmd_compare(cfg):
    if not cfg.get("a"):
        raise UsageError("compare needs --a")
    ids, pts, va = read_field_csv(cfg["a"])
    if cfg.get("b"):
        ids_b, pts_b, vb = read_field_csv(cfg["b"])
        if pts_b.shape != pts.shape or not np.array_equal(ids, ids_b) or not np.array_equal(pts, pts_b):
            raise UsageError("fields live on different clouds")
    elif cfg.get("oracle"):
        vb = oracle_values(cfg["oracle"], pts)
    else:
        raise UsageError("compare needs --b or --oracle")
    result = {"l1": l1_error(va, vb), "linf": linf_error(va, vb), "n": int(len(va)), "config": cfg}
    write_json(cfg["out"], result)
    if cfg.get("diff"):
        write_field_csv(cfg["diff"], pts, va - vb, ids=ids)
    return EXIT_OK


# -- bench ----------------------------------------------------------------------

BENCH_COLUMNS = ("suite", "density", "size", "k", "iterations", "time_s", "error", "residual", "status")


def _bench_plan(suite):
    if suite == "tukey-grid":
        return [("circle", "donut", "square"), (32, 64, 96)]
    if suite == "eikonal-cloud-2d":
        return [("square", "ellipse", "two_balls"), (1000, 2000, 4000, 8000)]
    if suite == "eikonal-cloud-3d":
        return [("square", "ellipse", "two_balls"), (4000, 8000, 16000)]
    if suite == "tukey-cloud":
        return [("unit_square", "disk", "ball"), (1000, 3000, 10000)]
    if suite == "affine-grid":
        return [("square", "ellipse", "two_balls", "two_balls_init1"), (32, 64, 128)]
    raise UsageError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")


def _bench_row(suite, name, size, seed, max_sweeps, threads):
    """One table cell: returns ``(k, report, error)``."""
    if suite == "tukey-grid":
        k = size // 2
        cloud = build_grid_cloud((size, size), Stencil.ring(k))
        model = named_density(name, 2)
        rep = solve(SchemeSpec.tukey(model), cloud, max_sweeps=max_sweeps, threads=threads)
        return k, rep, l1_error(rep.final_field, brute_tukey_depth(model, cloud.points))
    if suite in ("eikonal-cloud-2d", "eikonal-cloud-3d"):
        d = 2 if suite.endswith("2d") else 3
        pts = np.random.default_rng(seed).uniform(0.0, 1.0, (size, d))
        cloud = build_knn_cloud(pts, 20, BoundarySpec(domain=Domain.unit_box(d)))
        model = named_density(name, d)
        rep = solve(SchemeSpec.eikonal(model), cloud, max_sweeps=max_sweeps, threads=threads)
        try:
            err = l1_error(rep.final_field, exact_distance_field(model, pts).values)
        except OracleError:
            err = float("nan")
        return 20, rep, err
    if suite == "tukey-cloud":
        d = 3 if name == "ball" else 2
        model = named_density(name, d)
        pts = sample_density(model, size, seed=seed)
        cloud = build_knn_cloud(pts, 30, BoundarySpec(domain=_support_domain(model)))
        rep = solve(SchemeSpec.tukey(model), cloud, max_sweeps=max_sweeps, threads=threads)
        return 30, rep, l1_error(rep.final_field, brute_tukey_depth(model, pts))
    if suite == "affine-grid":
        shape = name.replace("_init1", "")
        init = 1.0 if name.endswith("_init1") else 0.0
        tol = 5e-3 if shape == "square" else 3e-3
        cloud = build_grid_cloud((size, size), Stencil.wide(7))
        spec = SchemeSpec.alpha_flow(1.0 / 3.0, named_density(shape, 2))
        rep = solve(spec, cloud, init=init, tol=tol, max_sweeps=max_sweeps, threads=threads)
        return 49, rep, float("nan")
    raise UsageError(f"unknown suite {suite!r}")


def _support_domain(model):
    """Domain whose band carries the Dirichlet data for samples of ``model``."""
    if model.kind == "indicator_circle":
        return Domain.ball(model.center, model.radius)
    lo, hi = model.bounding_box()
    return Domain.box(lo, hi)


def cmd_bench(cfg):
    suite = cfg.get("suite")
    if not suite:
        raise UsageError("bench needs --suite")
    densities, sizes = _bench_plan(suite)
    if cfg.get("sizes"):
        sizes = tuple(int(s) for s in str(cfg["sizes"]).split(","))
    if cfg.get("densities"):
        densities = tuple(s.strip() for s in str(cfg["densities"]).split(","))
    threads = resolve_threads(cfg.get("threads"))
    seed = int(cfg.get("seed") or 0)
    rows = []
    for name in densities:
        for size in sizes:
            t0 = time.perf_counter()
            try:
                k, rep, err = _bench_row(suite, name, size, seed, int(cfg["max_sweeps"]), threads)
                status = rep.stop_reason if rep.converged else "not_converged"
                row = [suite, name, size, k, rep.iterations, time.perf_counter() - t0, err, rep.residual, status]
            except Exception as exc:  # a failing row is recorded and the suite continues
                row = [suite, name, size, "", "", time.perf_counter() - t0, "", "", f"error: {exc}"]
            rows.append(row)
    with open(cfg["out"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_COLUMNS)
        for row in rows:
            w.writerow([("%.6g" % v) if isinstance(v, float) else v for v in row])
    write_json(str(Path(cfg["out"]).with_suffix(".json")), {"config": cfg, "seed": seed, "rows": len(rows)})
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "compare": cmd_compare, "bench": cmd_bench}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing command; choose from gen, solve, compare, bench")
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except USAGE_ERRORS as exc:
        print(f"lshj: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"lshj: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"lshj: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
