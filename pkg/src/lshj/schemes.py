"""Monotone schemes ``S_h(u, t, x) = max_{p in P} F_h(p, u, t, x)``.

Two routes evaluate the same scheme.  The ``f_*`` functions and
:func:`scheme_value` work one node at a time straight from the definitions;
:class:`Scheme` precomputes everything that does not depend on the field and
evaluates whole sweeps at once.  The solver uses the latter, the tests check
it against the former.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .calculus import (CalculusError, candidate_thresholds, directional_gradient,
                       orthonormal_pair_indices, perp_2d, second_difference, subdifferential)
from .density import (DensityModel, density_at, hyperplane_integral_analytic,
                      hyperplane_integral_mc, line_integral_grid)
from .geometry import PointCloud

HAMILTONIANS = ("eikonal", "tukey", "mc2d", "alpha", "g_flow", "mc3d", "gauss3d")
FIRST_ORDER = ("eikonal", "tukey")
ESTIMATORS = ("auto", "grid", "analytic", "mc")


class SchemeError(ValueError):
    pass


def _call_g(g, s):
    s = np.asarray(s, dtype=float)
    try:
        out = np.asarray(g(s), dtype=float)
        if out.shape == s.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.vectorize(lambda v: float(g(v)), otypes=[float])(s)


def check_g_admissible(g, rtol=1e-6):
    """Check that ``g`` is increasing, ``g(0) >= 0`` and ``g'(s) <= g(s)/s``.

    The last condition keeps ``s -> s g(c/s)`` nondecreasing, which is what
    makes the g-flow scheme monotone in the gradient term.  It is checked on
    ``s = 2^k, -20 <= k <= 10`` with central differences.
    """
    s = 2.0 ** np.arange(-20, 11)
    g0 = float(_call_g(g, np.array([0.0]))[0])
    if not np.isfinite(g0) or g0 < 0:
        raise SchemeError(f"g(0) = {g0} must be finite and >= 0")
    gs = _call_g(g, s)
    if not np.all(np.isfinite(gs)):
        raise SchemeError("g is not finite on the check grid")
    if np.any(np.diff(gs) < 0) or gs[0] < g0:
        raise SchemeError("g must be nondecreasing")
    step = 1e-4 * s
    deriv = (_call_g(g, s + step) - _call_g(g, s - step)) / (2 * step)
    bound = gs / s
    bad = deriv > bound * (1 + rtol) + 1e-300
    if np.any(bad):
        k = int(np.log2(s[np.argmax(bad)]))
        raise SchemeError(f"g violates g'(s) <= g(s)/s at s = 2^{k}")
    return True


@dataclass(frozen=True)
class SchemeSpec:
    """Hamiltonian choice and its data.

    ``rhs`` is ``f`` (a constant, a node array, or an indicator
    :class:`DensityModel` evaluated at nodes) for every Hamiltonian except
    ``tukey``, where it is the density ``rho``.
    """

    hamiltonian: str
    rhs: Union[float, np.ndarray, DensityModel, None] = 1.0
    alpha: float = 1.0
    g: Optional[Callable] = field(default=None, compare=False)
    g_limit: Optional[Callable] = field(default=None, compare=False)
    estimator: str = "auto"
    mc_seed: int = 0

    def __post_init__(self):
        if self.hamiltonian not in HAMILTONIANS:
            raise SchemeError(f"unknown hamiltonian {self.hamiltonian!r}; choose from {HAMILTONIANS}")
        if not 0 < self.alpha <= 1:
            raise SchemeError("alpha must lie in (0, 1]")
        if self.estimator not in ESTIMATORS:
            raise SchemeError(f"unknown estimator {self.estimator!r}")
        if self.hamiltonian == "g_flow":
            if self.g is None:
                raise SchemeError("g_flow needs g")
            check_g_admissible(self.g)
        if self.hamiltonian == "tukey" and not isinstance(self.rhs, DensityModel):
            raise SchemeError("tukey needs a DensityModel as rhs")

    @classmethod
    def eikonal(cls, f=1.0):
        return cls("eikonal", f)

    @classmethod
    def tukey(cls, density, estimator="auto", mc_seed=0):
        return cls("tukey", density, estimator=estimator, mc_seed=mc_seed)

    @classmethod
    def mc2d(cls, f=1.0):
        return cls("mc2d", f)

    @classmethod
    def alpha_flow(cls, alpha, f=1.0):
        return cls("alpha", f, alpha=float(alpha))

    @classmethod
    def g_flow(cls, g, f=1.0, g_limit=None):
        return cls("g_flow", f, g=g, g_limit=g_limit)

    @classmethod
    def mc3d(cls, f=1.0):
        return cls("mc3d", f)

    @classmethod
    def gauss3d(cls, f=1.0):
        return cls("gauss3d", f)

    @property
    def order(self):
        return 1 if self.hamiltonian in FIRST_ORDER else 2

    @property
    def dim(self):
        """Required dimension, or ``None`` when any dimension works."""
        if self.hamiltonian in ("mc2d", "alpha", "g_flow"):
            return 2
        if self.hamiltonian in ("mc3d", "gauss3d"):
            return 3
        return None

    def f_values(self, cloud: PointCloud):
        """Node values of ``f`` (zeros for ``tukey``)."""
        if self.hamiltonian == "tukey":
            return np.zeros(cloud.n)
        rhs = self.rhs
        if rhs is None:
            return np.zeros(cloud.n)
        if isinstance(rhs, DensityModel):
            return density_at(rhs, cloud.points)
        arr = np.asarray(rhs, dtype=float)
        if arr.ndim == 0:
            return np.full(cloud.n, float(arr))
        if arr.shape != (cloud.n,):
            raise SchemeError(f"rhs has shape {arr.shape}, expected ({cloud.n},)")
        return arr.copy()

    def resolve_estimator(self, cloud: PointCloud):
        if self.hamiltonian != "tukey":
            return None
        est = self.estimator
        if est == "auto":
            if cloud.is_grid and cloud.dim == 2:
                return "grid"
            if self.rhs.is_indicator:
                return "analytic"
            return "mc"
        return est

    def g_at_zero_gradient(self, c):
        """``lim_{s -> 0+} s g(c / s)`` for the g-flow."""
        c = np.asarray(c, dtype=float)
        if self.g_limit is not None:
            return _call_g(self.g_limit, c)
        s = 1e-150
        with np.errstate(all="ignore"):
            v = s * _call_g(self.g, c / s)
        return np.where(c == 0, 0.0, np.nan_to_num(v, nan=0.0, posinf=0.0))

    def describe(self):
        out = {"hamiltonian": self.hamiltonian, "alpha": self.alpha}
        if self.hamiltonian == "tukey":
            out["estimator"] = self.estimator
            out["mc_seed"] = self.mc_seed
        if isinstance(self.rhs, DensityModel):
            out["rhs"] = self.rhs.kind
        elif self.rhs is None or np.ndim(self.rhs) == 0:
            out["rhs"] = None if self.rhs is None else float(self.rhs)
        else:
            out["rhs"] = "array"
        return out


# ---------------------------------------------------------------------------
# per-node definitions
# ---------------------------------------------------------------------------


def _node_f(spec, cloud, node):
    return float(spec.f_values(cloud)[node]) if spec.hamiltonian != "tukey" else 0.0


def _member_index(cloud, node, p):
    j = cloud.displacement_index(node, -np.asarray(p, dtype=float))
    if j is None:
        raise CalculusError(f"-p is not a displacement of node {node}")
    return j


def f_eikonal(p, field, t, node, cloud, f=1.0):
    """``grad_p u - f``."""
    j = _member_index(cloud, node, p)
    return directional_gradient(cloud, field, t, node, j) - f


def tukey_integral(density, cloud, node, p, estimator="auto", seed=0):
    """Hyperplane integral of ``density`` through ``node`` with normal ``p``."""
    if estimator == "auto":
        estimator = SchemeSpec.tukey(density).resolve_estimator(cloud)
    if estimator == "grid":
        return float(line_integral_grid(density, cloud, node, p))
    if estimator == "analytic":
        return float(hyperplane_integral_analytic(density, cloud.points[node], p))
    if estimator == "mc":
        return hyperplane_integral_mc(density, cloud.points[node], p, seed=(seed, int(node)))
    raise SchemeError(f"unknown estimator {estimator!r}")


def f_tukey(p, field, t, node, cloud, density, estimator="auto", seed=0):
    """``grad_p u - int_{(y-x).p=0} rho``."""
    j = _member_index(cloud, node, p)
    return (directional_gradient(cloud, field, t, node, j)
            - tukey_integral(density, cloud, node, p, estimator, seed))


def _neg_lap_perp(p, field, t, node, cloud):
    q = perp_2d(p)
    return -second_difference(cloud, field, t, node, q)


def f_mc2d(p, field, t, node, cloud, f=1.0):
    """``-Delta_{p_perp p_perp} u - f``."""
    return _neg_lap_perp(p, field, t, node, cloud) - f


def f_alpha(p, field, t, node, cloud, alpha, f=1.0):
    """``(grad_p u)_+^(1-alpha) (-Delta_{p_perp p_perp} u)_+^alpha - f``."""
    j = _member_index(cloud, node, p)
    grad = max(directional_gradient(cloud, field, t, node, j), 0.0)
    lap = max(_neg_lap_perp(p, field, t, node, cloud), 0.0)
    return grad ** (1.0 - alpha) * lap**alpha - f


def f_g(p, field, t, node, cloud, g, f=1.0, g_limit=None):
    """``s g(c / s) - f`` with ``s = (grad_p u)_+`` and ``c = (-Delta_{p_perp p_perp} u)_+``."""
    j = _member_index(cloud, node, p)
    s = max(directional_gradient(cloud, field, t, node, j), 0.0)
    c = max(_neg_lap_perp(p, field, t, node, cloud), 0.0)
    if s > 0:
        return s * float(_call_g(g, np.array([c / s]))[0]) - f
    spec = SchemeSpec.g_flow(g, g_limit=g_limit)
    return float(spec.g_at_zero_gradient(np.array([c]))[0]) - f


def _pairs_at(cloud, node, p):
    disp = cloud.displacements[node]
    pairs = orthonormal_pair_indices(p, disp)
    if not pairs:
        raise CalculusError(f"no orthogonal stencil pair for p={tuple(np.round(p, 12))}")
    return disp, pairs


def f_mc3d(p, field, t, node, cloud, f=1.0):
    """``-Delta_{v1 v1} u - Delta_{v2 v2} u - f`` for the first orthogonal pair ``v1, v2 ⊥ p``."""
    disp, pairs = _pairs_at(cloud, node, p)
    a, b = pairs[0]
    return (-second_difference(cloud, field, t, node, disp[a])
            - second_difference(cloud, field, t, node, disp[b]) - f)


def f_gauss3d(p, field, t, node, cloud, f=1.0):
    """``(grad_p u)_+^(1/2) min_{pairs} (-Delta_{v1})_+^(1/4) (-Delta_{v2})_+^(1/4) - f``."""
    j = _member_index(cloud, node, p)
    grad = max(directional_gradient(cloud, field, t, node, j), 0.0)
    disp, pairs = _pairs_at(cloud, node, p)
    best = np.inf
    for a, b in pairs:
        la = max(-second_difference(cloud, field, t, node, disp[a]), 0.0)
        lb = max(-second_difference(cloud, field, t, node, disp[b]), 0.0)
        best = min(best, (la * lb) ** 0.25)
    return np.sqrt(grad) * best - f


def hamiltonian_value(spec: SchemeSpec, p, field, t, node, cloud):
    """``F_h(p, u, t, x)`` for a single member ``p``."""
    name = spec.hamiltonian
    if name == "tukey":
        return f_tukey(p, field, t, node, cloud, spec.rhs, spec.resolve_estimator(cloud), spec.mc_seed)
    f = _node_f(spec, cloud, node)
    if name == "eikonal":
        return f_eikonal(p, field, t, node, cloud, f)
    if name == "mc2d":
        return f_mc2d(p, field, t, node, cloud, f)
    if name == "alpha":
        return f_alpha(p, field, t, node, cloud, spec.alpha, f)
    if name == "g_flow":
        return f_g(p, field, t, node, cloud, spec.g, f, spec.g_limit)
    if name == "mc3d":
        return f_mc3d(p, field, t, node, cloud, f)
    return f_gauss3d(p, field, t, node, cloud, f)


def _has_pair(cloud, node, p):
    return bool(orthonormal_pair_indices(p, cloud.displacements[node]))


def scheme_value(spec: SchemeSpec, field, t, node, cloud: PointCloud):
    """``max_{p in P(u, t, x)} F_h(p, u, t, x)``, or ``-inf`` when ``P`` is empty.

    For the 3D curvature Hamiltonians only directions that admit an
    orthogonal stencil pair are candidates.
    """
    members = subdifferential(cloud, field, t, node)
    best = -np.inf
    for _, p in members:
        if spec.hamiltonian in ("mc3d", "gauss3d") and not _has_pair(cloud, node, p):
            continue
        best = max(best, hamiltonian_value(spec, np.asarray(p), field, t, node, cloud))
    return best


# ---------------------------------------------------------------------------
# vectorized engine
# ---------------------------------------------------------------------------


@dataclass
class Frame:
    """Field-dependent quantities for a block of rows, frozen during a sweep."""

    rows: np.ndarray
    values: np.ndarray  # (m, K) neighbor values
    thresholds: np.ndarray  # (m, K) membership thresholds
    lap_sum: Optional[np.ndarray] = None  # (m, K) or (m, K, P, 2) sums u(x+q) + u(x-q)


class Scheme:
    """A :class:`SchemeSpec` bound to a cloud, evaluated on blocks of interior nodes."""

    def __init__(self, spec: SchemeSpec, cloud: PointCloud, nodes=None):
        self.spec = spec
        self.cloud = cloud
        name = spec.hamiltonian
        if spec.dim is not None and cloud.dim != spec.dim:
            raise SchemeError(f"{name} needs d={spec.dim}, cloud has d={cloud.dim}")
        if spec.order == 2:
            if not cloud.is_grid:
                raise SchemeError(f"{name} needs a symmetric grid stencil")
            if cloud.stencil.kind == "interp_ring":
                raise SchemeError("interpolated ring stencils only support first-order schemes")
        self.nodes = cloud.interior if nodes is None else np.asarray(nodes, dtype=int)
        if np.any(cloud.boundary_mask[self.nodes]):
            raise SchemeError("scheme nodes must be interior")
        disp = cloud.displacements[self.nodes]
        self.norms = np.linalg.norm(disp, axis=2)
        f = spec.f_values(cloud)
        self.f = f[self.nodes]
        self.k = cloud.n_neighbors
        self.candidates = np.ones(self.k, dtype=bool)

        if name == "tukey":
            self.c = self._tukey_rhs()
        else:
            self.c = self.f[:, None]
        self.fmax = float(np.max(np.abs(self.c))) if self.c.size else 0.0

        one = cloud.displacements[self.nodes[0]] if len(self.nodes) else None
        if name in ("mc2d", "alpha", "g_flow"):
            self._init_perp(one)
        elif name in ("mc3d", "gauss3d"):
            self._init_pairs(one)
        self.R = float(self.norms.max()) if self.norms.size else cloud.R

    # -- setup ---------------------------------------------------------------

    def _tukey_rhs(self):
        spec, cloud = self.spec, self.cloud
        est = spec.resolve_estimator(cloud)
        model = spec.rhs
        disp = cloud.displacements[self.nodes]
        if est == "grid":
            if not cloud.uniform_stencil:
                raise SchemeError("grid estimator needs a grid cloud")
            out = np.empty((len(self.nodes), self.k))
            for j in range(self.k):
                out[:, j] = line_integral_grid(model, cloud, self.nodes, -disp[0, j])
            return out
        if est == "analytic":
            x = cloud.points[self.nodes][:, None, :]
            return hyperplane_integral_analytic(model, x, -disp)
        return self._tukey_mc(model, disp)

    def _tukey_mc(self, model, disp):
        """Monte-Carlo integrals; one Gaussian draw per node is projected for every ``p``."""
        n_mc, sig = model.n_mc, model.sigma
        if sig is None:
            raise SchemeError("Monte-Carlo estimator needs sigma on the density model")
        out = np.empty((len(self.nodes), self.k))
        d = self.cloud.dim
        for r, node in enumerate(self.nodes):
            x = self.cloud.points[node]
            rng = np.random.default_rng((self.spec.mc_seed, int(node)))
            z = rng.standard_normal((n_mc, d)) * sig
            u = -disp[r] / self.norms[r][:, None]
            y = x + z[None] - (z @ u.T).T[:, :, None] * u[:, None, :]
            out[r] = density_at(model, y).mean(axis=1)
        return out

    def _init_perp(self, one):
        k = self.k
        self.jq_plus = np.empty(k, dtype=int)
        self.jq_minus = np.empty(k, dtype=int)
        for j in range(k):
            q = perp_2d(-one[j])
            a = self.cloud.displacement_index(self.nodes[0], q)
            b = self.cloud.displacement_index(self.nodes[0], -q)
            if a is None or b is None:
                raise SchemeError("stencil lacks a perpendicular offset; use a symmetric square stencil")
            self.jq_plus[j], self.jq_minus[j] = a, b
        self.q2 = (one[self.jq_plus] ** 2).sum(axis=1)

    def _init_pairs(self, one):
        k = self.k
        pairs = [orthonormal_pair_indices(-one[j], one) for j in range(k)]
        self.candidates = np.array([len(pl) > 0 for pl in pairs])
        if not self.candidates.any():
            raise SchemeError("no stencil direction admits an orthogonal pair; widen the stencil")
        neg = np.array([self.cloud.displacement_index(self.nodes[0], -one[i]) for i in range(k)])
        if np.any(neg == None):  # noqa: E711
            raise SchemeError("3D curvature schemes need a symmetric stencil")
        neg = neg.astype(int)
        if self.spec.hamiltonian == "mc3d":
            pairs = [pl[:1] for pl in pairs]
        npair = max(len(pl) for pl in pairs)
        pa = np.zeros((k, npair), dtype=int)
        pb = np.zeros((k, npair), dtype=int)
        valid = np.zeros((k, npair), dtype=bool)
        for j, pl in enumerate(pairs):
            for s, (a, b) in enumerate(pl):
                pa[j, s], pb[j, s], valid[j, s] = a, b, True
        self.pair_idx = np.stack([pa, pb], axis=-1)  # (K, P, 2)
        self.pair_neg = neg[self.pair_idx]
        self.pair_valid = valid
        self.pair_q2 = (one ** 2).sum(axis=1)[self.pair_idx]

    # -- evaluation ------------------------------------------------------------

    def frame(self, u, rows=None):
        rows = np.arange(len(self.nodes)) if rows is None else np.asarray(rows)
        nodes = self.nodes[rows]
        vals = self.cloud.neighbor_values(u, nodes)
        thr = candidate_thresholds(vals, self.cloud.positive_dot_for(nodes))
        lap = None
        name = self.spec.hamiltonian
        if name in ("mc2d", "alpha", "g_flow"):
            lap = vals[:, self.jq_plus] + vals[:, self.jq_minus]
        elif name in ("mc3d", "gauss3d"):
            lap = vals[:, self.pair_idx] + vals[:, self.pair_neg]
        return Frame(rows=rows, values=vals, thresholds=thr, lap_sum=lap)

    def hamiltonians(self, fr: Frame, t):
        """``F_h`` for every candidate, ``(m, K)``; ``t`` is ``(m,)``."""
        t = np.asarray(t, dtype=float)[:, None]
        name = self.spec.hamiltonian
        rows = fr.rows
        norms = self.norms[rows]
        f = self.f[rows][:, None]
        grad = (t - fr.values) / norms
        if name in FIRST_ORDER:
            return grad - self.c[rows]
        if name in ("mc2d", "alpha", "g_flow"):
            neg_lap = (2.0 * t - fr.lap_sum) / self.q2
            if name == "mc2d":
                return neg_lap - f
            gp = np.maximum(grad, 0.0)
            lp = np.maximum(neg_lap, 0.0)
            if name == "alpha":
                a = self.spec.alpha
                return gp ** (1.0 - a) * lp**a - f
            with np.errstate(divide="ignore", invalid="ignore"):
                val = gp * _call_g(self.spec.g, np.where(gp > 0, lp / np.where(gp > 0, gp, 1.0), 0.0))
            val = np.where(gp > 0, val, self.spec.g_at_zero_gradient(lp))
            return val - f
        # 3D curvature: lap_sum (m, K, P, 2)
        neg_lap = (2.0 * t[:, :, None, None] - fr.lap_sum) / self.pair_q2
        if name == "mc3d":
            return neg_lap[:, :, 0, :].sum(axis=2) - f
        lp = np.maximum(neg_lap, 0.0)
        prod = (lp[..., 0] * lp[..., 1]) ** 0.25
        prod = np.where(self.pair_valid, prod, np.inf).min(axis=2)
        return np.sqrt(np.maximum(grad, 0.0)) * prod - f

    def values(self, fr: Frame, t):
        """``S_h(u, t, x)`` for each row of the frame; ``-inf`` on empty sets."""
        t = np.asarray(t, dtype=float)
        member = (t[:, None] >= fr.thresholds) & self.candidates
        F = self.hamiltonians(fr, t)
        return np.where(member, F, -np.inf).max(axis=1)

    def entry_level(self, fr: Frame):
        """Smallest ``t`` at which the subdifferential is nonempty."""
        thr = np.where(self.candidates, fr.thresholds, np.inf)
        return thr.min(axis=1)

    def residual_terms(self, fr: Frame, u):
        """``|S_h(u, u(x), x)|`` per row, with empty sets evaluated at the entry level."""
        t = np.asarray(u, dtype=float)[self.nodes[fr.rows]]
        s = self.values(fr, t)
        empty = ~np.isfinite(s)
        if np.any(empty):
            t2 = np.where(empty, self.entry_level(fr), t)
            s = np.where(empty, self.values(fr, t2), s)
        return np.abs(s), empty

    def pad(self):
        """Initial distance above the largest neighbor value for the bisection bracket."""
        fm = 1.0 + self.fmax
        if self.spec.order == 1:
            return self.R * fm
        if self.spec.hamiltonian == "gauss3d":
            return self.R**1.5 * fm**2
        a = self.spec.alpha if self.spec.hamiltonian == "alpha" else 1.0
        return self.R**2 * fm ** (1.0 / a)

    def update(self, fr: Frame, max_doublings=60, rtol=1e-12):
        """Root of ``t -> S_h(u, t, x)`` for every row by bisection.

        Returns ``(t, flagged)``; flagged rows never bracketed a sign change
        and carry ``nan``.
        """
        m = len(fr.rows)
        vmin = fr.values.min(axis=1)
        vmax = fr.values.max(axis=1)
        lo = vmin - self.R * (1.0 + self.fmax)
        pad = np.full(m, self.pad())
        hi = vmax + pad
        ok = self.values(fr, hi) >= 0
        for _ in range(max_doublings):
            if ok.all():
                break
            pad = np.where(ok, pad, 2.0 * pad)
            hi = np.where(ok, hi, vmax + pad)
            ok |= self.values(fr, hi) >= 0
        flagged = ~ok
        # the lower end is below every threshold, so S(lo) = -inf
        active = ok.copy()
        while active.any():
            mid = 0.5 * (lo + hi)
            pos = self.values(fr, mid) >= 0
            hi = np.where(active & pos, mid, hi)
            lo = np.where(active & ~pos, mid, lo)
            active &= (hi - lo) > rtol * (1.0 + np.abs(hi))
        hi = self._snap(fr, lo, hi, ok)
        return np.where(flagged, np.nan, hi), flagged

    def breakpoints(self, fr: Frame):
        """Values of ``t`` where a root can sit exactly, ``(m, B)``.

        Membership thresholds always qualify (``S`` jumps there); first-order
        schemes add the zero of each linear branch.
        """
        pts = [np.where(self.candidates, fr.thresholds, np.inf)]
        if self.spec.order == 1:
            pts.append(fr.values + self.norms[fr.rows] * self.c[fr.rows])
        return np.concatenate(pts, axis=1)

    def _snap(self, fr: Frame, lo, hi, ok, tries=3):
        """Replace the bisection end point by the exact breakpoint inside ``[lo, hi]``.

        Every breakpoint below the root has ``S < 0``, so the first one in the
        bracket with ``S >= 0`` is the root itself.  Keeps fixed points bit-stable
        across sweeps.
        """
        bp = self.breakpoints(fr)
        inside = (bp >= lo[:, None]) & (bp <= hi[:, None])
        cand = np.where(inside, bp, np.inf)
        out = hi.copy()
        pending = ok & np.isfinite(cand).any(axis=1)
        for _ in range(tries):
            if not pending.any():
                break
            c = cand.min(axis=1)
            t = np.where(pending & np.isfinite(c), c, hi)
            good = pending & np.isfinite(c) & (self.values(fr, t) >= 0)
            # a branch zero can miss S >= 0 by round-off; allow a few ulps
            t2 = np.minimum(t + 4.0 * np.spacing(np.abs(t)), hi)
            good2 = pending & ~good & np.isfinite(c) & (self.values(fr, t2) >= 0)
            out = np.where(good, t, np.where(good2, t2, out))
            good |= good2
            cand = np.where(cand <= c[:, None], np.inf, cand)
            pending &= ~good & np.isfinite(cand).any(axis=1)
        return out

    def exact_update(self, fr: Frame):
        """Closed-form root for first-order schemes: ``min_j max(m_j, u_j + |v_j| c_j)``."""
        if self.spec.order != 1:
            raise SchemeError("closed-form update only exists for first-order schemes")
        c = self.c[fr.rows]
        cand = np.maximum(fr.thresholds, fr.values + self.norms[fr.rows] * c)
        return cand.min(axis=1)


def prepare(spec: SchemeSpec, cloud: PointCloud, nodes=None) -> Scheme:
    return Scheme(spec, cloud, nodes)
