"""Implicit Jacobi iteration with per-node bisection, and its initializers."""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree

from .geometry import PointCloud
from .schemes import Scheme, SchemeSpec, scheme_value


class SolverError(RuntimeError):
    pass


STAGNATION_TOL = 1e-14
STAGNATION_SWEEPS = 3
DEFAULT_TOL = 3e-3


@dataclass
class SolveReport:
    iterations: int
    residual_history: List[float]
    wall_time: float
    h: float
    dtheta: float
    dtheta_lt_h: bool
    final_field: np.ndarray
    converged: bool
    stop_reason: str
    flagged_nodes: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    empty_nodes: int = 0
    config: dict = field(default_factory=dict)

    @property
    def residual(self):
        return self.residual_history[-1] if self.residual_history else float("nan")

    def to_dict(self, seed=None, config=None):
        cfg = dict(self.config)
        if config:
            cfg.update(config)
        return {
            "iterations": int(self.iterations),
            "residuals": [float(r) for r in self.residual_history],
            "wall_time_s": float(self.wall_time),
            "h": float(self.h),
            "dtheta": float(self.dtheta),
            "dtheta_lt_h": bool(self.dtheta_lt_h),
            "flagged_nodes": int(len(self.flagged_nodes)),
            "converged": bool(self.converged),
            "stop_reason": self.stop_reason,
            "config": cfg,
            "seed": seed if seed is not None else cfg.get("seed"),
        }


def resolve_threads(threads=None):
    """``threads`` if given, else ``$LSHJ_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("LSHJ_THREADS")
        threads = int(env) if env else 1
    threads = int(threads)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


def _node_array(values, cloud: PointCloud, name):
    if callable(values):
        arr = np.asarray(values(cloud.points), dtype=float)
    else:
        arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full(cloud.n, float(arr))
    if arr.shape != (cloud.n,):
        raise ValueError(f"{name} has shape {arr.shape}, expected ({cloud.n},)")
    if not np.all(np.isfinite(arr)):
        raise SolverError(f"{name} contains non-finite values")
    return arr.copy()


def _blocks(m, threads, block=8192):
    nb = max(threads, -(-m // block))
    return [b for b in np.array_split(np.arange(m), nb) if len(b)]


class _Sweeper:
    """Runs frames and updates over row blocks, optionally on a thread pool."""

    def __init__(self, scheme: Scheme, threads: int):
        self.scheme = scheme
        self.blocks = _blocks(len(scheme.nodes), threads)
        self.pool = ThreadPoolExecutor(threads) if threads > 1 else None

    def map(self, fn):
        if self.pool is None:
            return [fn(b) for b in self.blocks]
        return list(self.pool.map(fn, self.blocks))

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()

    def residual_and_update(self, u, do_update=True):
        sch = self.scheme

        def work(rows):
            fr = sch.frame(u, rows)
            res, empty = sch.residual_terms(fr, u)
            if not do_update:
                return rows, res, empty, None, None
            t, flagged = sch.update(fr)
            return rows, res, empty, t, flagged

        parts = self.map(work)
        m = len(sch.nodes)
        res = np.empty(m)
        empty = np.zeros(m, dtype=bool)
        t = np.empty(m) if do_update else None
        flagged = np.zeros(m, dtype=bool) if do_update else None
        for rows, r, e, tt, fl in parts:
            res[rows], empty[rows] = r, e
            if do_update:
                t[rows], flagged[rows] = tt, fl
        return res, empty, t, flagged


def residual(spec: SchemeSpec, field, cloud: PointCloud, scheme: Optional[Scheme] = None):
    """Mean of ``|S_h(u, u(x), x)|`` over interior nodes.

    Nodes with an empty subdifferential at ``t = u(x)`` contribute the scheme
    value at the smallest ``t`` where the set becomes nonempty.
    """
    sch = scheme or Scheme(spec, cloud)
    if len(sch.nodes) == 0:
        return 0.0
    u = np.asarray(field, dtype=float)
    res, _ = sch.residual_terms(sch.frame(u), u)
    return float(res.mean())


def node_update(spec: SchemeSpec, field_prev, node: int, cloud: PointCloud,
                max_doublings=60, rtol=1e-12):
    """Root of ``t -> S_h(u_prev, t, x)`` at one node, from the per-node definitions.

    Returns ``(t, flagged)``; a flagged node keeps its previous value.
    """
    u = np.asarray(field_prev, dtype=float)
    vals = cloud.neighbor_values(u, [node])[0]
    R = float(np.linalg.norm(cloud.displacements[node], axis=1).max())
    sch_f = spec.f_values(cloud)
    fmax = float(np.abs(sch_f).max()) if spec.hamiltonian != "tukey" else 0.0
    if spec.hamiltonian == "tukey":
        # bracket from the integrals of the candidates at this node
        sch = Scheme(spec, cloud, nodes=[node])
        fmax = sch.fmax
        pad = sch.pad()
    else:
        fm = 1.0 + fmax
        if spec.order == 1:
            pad = R * fm
        elif spec.hamiltonian == "gauss3d":
            pad = R**1.5 * fm**2
        else:
            a = spec.alpha if spec.hamiltonian == "alpha" else 1.0
            pad = R**2 * fm ** (1.0 / a)

    def S(t):
        return scheme_value(spec, u, t, node, cloud)

    lo = vals.min() - R * (1.0 + fmax)
    hi = vals.max() + pad
    for _ in range(max_doublings + 1):
        if S(hi) >= 0:
            break
        pad *= 2.0
        hi = vals.max() + pad
    else:
        return float(u[node]), True
    while hi - lo > rtol * (1.0 + abs(hi)):
        mid = 0.5 * (lo + hi)
        if S(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return float(hi), False


def solve(spec: SchemeSpec, cloud: PointCloud, dirichlet=0.0, init=0.0, tol: float = DEFAULT_TOL,
          max_sweeps: int = 1000, threads: Optional[int] = None, scheme: Optional[Scheme] = None,
          callback: Optional[Callable] = None) -> SolveReport:
    """Jacobi iteration ``S_h(u^n, u^{n+1}(x), x) = 0`` until the residual drops below ``tol``.

    Parameters
    ----------
    dirichlet, init : scalar, node array or callable of the points
        Boundary data and initial guess; boundary nodes always hold ``dirichlet``.
    tol : float
        Stop once the residual of the current iterate is at most ``tol``.
    max_sweeps : int
        Sweep budget; exhausting it returns a report with ``converged=False``.
    threads : int, optional
        Worker threads per sweep (default ``$LSHJ_THREADS`` or 1).  Results do
        not depend on the thread count.
    callback : callable, optional
        Called as ``callback(sweep, u, residual)`` after each residual evaluation.

    Returns
    -------
    SolveReport
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    start = time.perf_counter()
    threads = resolve_threads(threads)
    sch = scheme or Scheme(spec, cloud)
    g = _node_array(dirichlet, cloud, "dirichlet")
    u = _node_array(init, cloud, "init")
    u[cloud.boundary_mask] = g[cloud.boundary_mask]
    nodes = sch.nodes
    sweeper = _Sweeper(sch, threads)
    history: List[float] = []
    flagged_any = np.zeros(len(nodes), dtype=bool)
    quiet = 0
    sweeps = 0
    reason = "max_sweeps"
    converged = False
    empty_count = 0
    try:
        while True:
            last = sweeps >= max_sweeps
            res, empty, t, flagged = sweeper.residual_and_update(u, do_update=not last)
            r = float(res.mean()) if len(res) else 0.0
            history.append(r)
            empty_count = int(empty.sum())
            if callback is not None:
                callback(sweeps, u, r)
            if r <= tol:
                reason, converged = "tol", True
                break
            if last:
                break
            if np.any(np.isnan(u)):
                raise SolverError("NaN in field")
            new = np.where(flagged, u[nodes], t)
            flagged_any |= flagged
            change = float(np.max(np.abs(new - u[nodes]))) if len(nodes) else 0.0
            u[nodes] = new
            sweeps += 1
            quiet = quiet + 1 if change < STAGNATION_TOL else 0
            if quiet >= STAGNATION_SWEEPS:
                res, _, _, _ = sweeper.residual_and_update(u, do_update=False)
                history.append(float(res.mean()) if len(res) else 0.0)
                reason, converged = "stagnation", True
                break
    finally:
        sweeper.close()
    return SolveReport(
        iterations=sweeps,
        residual_history=history,
        wall_time=time.perf_counter() - start,
        h=cloud.h,
        dtheta=cloud.dtheta,
        dtheta_lt_h=bool(cloud.dtheta < cloud.h),
        final_field=u,
        converged=converged,
        stop_reason=reason,
        flagged_nodes=nodes[flagged_any],
        empty_nodes=empty_count,
        config={"scheme": spec.describe(), "tol": tol, "max_sweeps": max_sweeps,
                "threads": threads, "n": cloud.n, "dim": cloud.dim, "cloud": cloud.kind},
    )


def coarse_to_fine(spec: SchemeSpec, coarse_cloud: PointCloud, fine_cloud: PointCloud,
                   coarse_solution, dirichlet=0.0):
    """Initial guess on ``fine_cloud`` from a solution on ``coarse_cloud``.

    Grids use (multi)linear interpolation; other clouds take the value of the
    nearest coarse node.  Boundary nodes are reset to ``dirichlet``.
    """
    cs = np.asarray(coarse_solution, dtype=float)
    if cs.shape != (coarse_cloud.n,):
        raise ValueError("coarse solution does not match the coarse cloud")
    if coarse_cloud.is_grid and fine_cloud.is_grid and coarse_cloud.dim == fine_cloud.dim:
        axes = [np.linspace(0.0, 1.0, m) for m in coarse_cloud.grid_dims]
        interp = RegularGridInterpolator(axes, cs.reshape(coarse_cloud.grid_dims), method="linear")
        out = interp(np.clip(fine_cloud.points, 0.0, 1.0))
    else:
        _, idx = cKDTree(coarse_cloud.points).query(fine_cloud.points)
        out = cs[idx]
    g = _node_array(dirichlet, fine_cloud, "dirichlet")
    out[fine_cloud.boundary_mask] = g[fine_cloud.boundary_mask]
    return out
