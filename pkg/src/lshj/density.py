"""Density models and estimators of their hyperplane integrals.

Three estimators feed the Tukey Hamiltonian: a sum along grid lines, exact
chord/section formulas for the indicator shapes, and a Monte-Carlo average
over a Gaussian on the hyperplane (with a KDE for empirical samples).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import gammaln

INDICATOR_KINDS = ("indicator_square", "indicator_circle", "indicator_donut",
                   "indicator_two_balls", "indicator_ellipse")


class DensityError(ValueError):
    pass


def _rotation(theta, d=2):
    """Rotation by ``theta`` in the ``(x0, x1)`` plane of ``R^d``."""
    c, s = np.cos(theta), np.sin(theta)
    rot = np.eye(d)
    rot[:2, :2] = [[c, -s], [s, c]]
    return rot


@dataclass(frozen=True)
class DensityModel:
    kind: str
    dim: int
    center: Optional[tuple] = None
    radius: Optional[float] = None
    inner_radius: Optional[float] = None
    centers: Optional[tuple] = None
    lo: Optional[tuple] = None
    hi: Optional[tuple] = None
    semi_axes: Optional[tuple] = None
    angle: float = 0.0
    samples: Optional[np.ndarray] = field(default=None, repr=False)
    bandwidth: Optional[float] = None
    n_mc: int = 2000
    sigma: Optional[float] = None
    n_kde: Optional[int] = None

    def __post_init__(self):
        if self.kind not in INDICATOR_KINDS + ("empirical_kde",):
            raise DensityError(f"unknown density kind {self.kind!r}")
        for r in (self.radius, self.inner_radius, self.bandwidth, self.sigma):
            if r is not None and r <= 0:
                raise DensityError("radii and bandwidths must be positive")
        if self.kind == "indicator_donut" and not self.inner_radius < self.radius:
            raise DensityError("donut inner radius must be smaller than the outer radius")
        if self.kind == "empirical_kde" and (self.samples is None or len(self.samples) < 1):
            raise DensityError("empirical_kde needs at least one sample")
        if self.semi_axes is not None and min(self.semi_axes) <= 0:
            raise DensityError("semi-axes must be positive")

    # -- constructors -------------------------------------------------------

    @classmethod
    def square(cls, lo=(0.25, 0.25), hi=(0.75, 0.75)):
        return cls("indicator_square", len(lo), lo=tuple(map(float, lo)), hi=tuple(map(float, hi)))

    @classmethod
    def circle(cls, center=(0.5, 0.5), radius=0.25):
        return cls("indicator_circle", len(center), center=tuple(map(float, center)), radius=float(radius))

    @classmethod
    def donut(cls, center=(0.5, 0.5), inner_radius=0.125, radius=0.25):
        return cls("indicator_donut", len(center), center=tuple(map(float, center)),
                   radius=float(radius), inner_radius=float(inner_radius))

    @classmethod
    def two_balls(cls, centers=((0.3, 0.3), (0.7, 0.7)), radius=0.15):
        centers = tuple(tuple(map(float, c)) for c in centers)
        return cls("indicator_two_balls", len(centers[0]), centers=centers, radius=float(radius))

    @classmethod
    def ellipse(cls, center=(0.5, 0.5), semi_axes=(0.3, 0.15), angle=np.pi / 6):
        """Ellipse (or ellipsoid when ``len(center) == 3``) rotated in the ``(x0, x1)`` plane."""
        if len(semi_axes) != len(center):
            raise DensityError("semi_axes and center must have the same length")
        return cls("indicator_ellipse", len(center), center=tuple(map(float, center)),
                   semi_axes=tuple(map(float, semi_axes)), angle=float(angle))

    @classmethod
    def kde(cls, samples, bandwidth=None, sigma=None, n_mc=2000, n_kde=None, k=10):
        """Gaussian KDE over ``samples``.

        Defaults tie the kernel widths to the sample resolution: bandwidth is
        the median distance to the ``k``-th neighbor and the hyperplane
        Gaussian width is three median nearest-neighbor distances.
        """
        samples = np.ascontiguousarray(samples, dtype=float)
        if bandwidth is None or sigma is None:
            kk = min(k, len(samples) - 1)
            dist, _ = cKDTree(samples).query(samples, k=kk + 1)
            if bandwidth is None:
                bandwidth = float(np.median(dist[:, kk]))
            if sigma is None:
                sigma = 3.0 * float(np.median(dist[:, 1]))
        return cls("empirical_kde", samples.shape[1], samples=samples, bandwidth=float(bandwidth),
                   sigma=float(sigma), n_mc=int(n_mc), n_kde=n_kde)

    @classmethod
    def named(cls, name, dim=2):
        """Default shapes by short name: square, circle, donut, two_balls, ellipse."""
        name = name.replace("-", "_")
        if dim == 2:
            table = {"square": cls.square, "circle": cls.circle, "donut": cls.donut,
                     "two_balls": cls.two_balls, "ellipse": cls.ellipse,
                     "unit_square": lambda: cls.square((0.0, 0.0), (1.0, 1.0)),
                     "disk": lambda: cls.circle((0.5, 0.5), 0.5)}
        elif dim == 3:
            table = {"square": lambda: cls.square((0.25,) * 3, (0.75,) * 3),
                     "cube": lambda: cls.square((0.25,) * 3, (0.75,) * 3),
                     "circle": lambda: cls.circle((0.5,) * 3, 0.25),
                     "ellipse": lambda: cls.ellipse((0.5,) * 3, (0.3, 0.15, 0.15), np.pi / 6),
                     "ball": lambda: cls.circle((0.5,) * 3, 0.5),
                     "two_balls": lambda: cls.two_balls(((0.3,) * 3, (0.7,) * 3), 0.15),
                     "two_balls_mc": lambda: cls.two_balls(((0.3,) * 3, (0.7,) * 3), 0.3),
                     "unit_square": lambda: cls.square((0.0,) * 3, (1.0,) * 3)}
        else:
            table = {"unit_square": lambda: cls.square((0.0,) * dim, (1.0,) * dim),
                     "ball": lambda: cls.circle((0.5,) * dim, 0.5)}
        if name not in table:
            raise DensityError(f"no default {dim}D density named {name!r}")
        return table[name]()

    def with_mc(self, **kw):
        return replace(self, **kw)

    @property
    def is_indicator(self):
        return self.kind != "empirical_kde"

    def bounding_box(self):
        if self.kind == "indicator_square":
            return np.array(self.lo), np.array(self.hi)
        if self.kind in ("indicator_circle", "indicator_donut"):
            c = np.array(self.center)
            return c - self.radius, c + self.radius
        if self.kind == "indicator_two_balls":
            c = np.array(self.centers)
            return c.min(axis=0) - self.radius, c.max(axis=0) + self.radius
        if self.kind == "indicator_ellipse":
            c = np.array(self.center)
            r = _rotation(self.angle, self.dim)
            ext = np.sqrt(((r * np.array(self.semi_axes)) ** 2).sum(axis=1))
            return c - ext, c + ext
        lo, hi = self.samples.min(axis=0), self.samples.max(axis=0)
        return lo - 3 * self.bandwidth, hi + 3 * self.bandwidth

    def volume(self):
        """Total mass of an indicator density."""
        d = self.dim
        if self.kind == "indicator_square":
            return float(np.prod(np.array(self.hi) - np.array(self.lo)))
        if self.kind == "indicator_circle":
            return _ball_volume(d, self.radius)
        if self.kind == "indicator_donut":
            return _ball_volume(d, self.radius) - _ball_volume(d, self.inner_radius)
        if self.kind == "indicator_two_balls":
            return len(self.centers) * _ball_volume(d, self.radius)
        if self.kind == "indicator_ellipse":
            return _ball_volume(d, 1.0) * float(np.prod(self.semi_axes))
        return 1.0


def _ball_volume(d, r):
    return float(np.exp((d / 2) * np.log(np.pi) - gammaln(d / 2 + 1)) * r**d)


# ---------------------------------------------------------------------------
# point evaluation
# ---------------------------------------------------------------------------


def _kde_eval(model: DensityModel, y, chunk=4096):
    xs = model.samples
    if model.n_kde is not None and model.n_kde < len(xs):
        xs = xs[: model.n_kde]
    r = model.bandwidth
    d = xs.shape[1]
    norm_c = (2.0 * np.pi * r * r) ** (-d / 2)
    sq_x = (xs * xs).sum(axis=1)
    out = np.empty(len(y))
    for s in range(0, len(y), chunk):
        yy = y[s : s + chunk]
        d2 = (yy * yy).sum(axis=1)[:, None] + sq_x[None, :] - 2.0 * yy @ xs.T
        np.maximum(d2, 0.0, out=d2)
        out[s : s + chunk] = np.exp(-d2 / (2 * r * r)).mean(axis=1)
    return norm_c * out


def density_at(model: DensityModel, y):
    """Density values at points ``y`` of shape ``(..., d)``."""
    y = np.asarray(y, dtype=float)
    shape = y.shape[:-1]
    pts = y.reshape(-1, y.shape[-1])
    kind = model.kind
    if kind == "indicator_square":
        inside = np.all((pts >= np.array(model.lo)) & (pts <= np.array(model.hi)), axis=1)
    elif kind == "indicator_circle":
        inside = ((pts - np.array(model.center)) ** 2).sum(axis=1) <= model.radius**2
    elif kind == "indicator_donut":
        r2 = ((pts - np.array(model.center)) ** 2).sum(axis=1)
        inside = (r2 <= model.radius**2) & (r2 >= model.inner_radius**2)
    elif kind == "indicator_two_balls":
        inside = np.zeros(len(pts), dtype=bool)
        for c in model.centers:
            inside |= ((pts - np.array(c)) ** 2).sum(axis=1) <= model.radius**2
    elif kind == "indicator_ellipse":
        z = (pts - np.array(model.center)) @ _rotation(model.angle, model.dim)
        inside = ((z / np.array(model.semi_axes)) ** 2).sum(axis=1) <= 1.0
    else:
        return _kde_eval(model, pts).reshape(shape)
    return inside.astype(float).reshape(shape)


# ---------------------------------------------------------------------------
# hyperplane integrals
# ---------------------------------------------------------------------------


def _unit(p):
    p = np.asarray(p, dtype=float)
    n = np.linalg.norm(p, axis=-1, keepdims=True)
    if np.any(n < 1e-14):
        raise DensityError("hyperplane normal must be nonzero")
    return p / n


def _ball_section(d, radius, s):
    """(d-1)-measure of a ball section at distance ``s`` from the center."""
    r2 = np.maximum(radius * radius - s * s, 0.0)
    if d == 2:
        return 2.0 * np.sqrt(r2)
    if d == 3:
        return np.pi * r2
    return _ball_volume(d - 1, 1.0) * r2 ** ((d - 1) / 2)


def _slab_chord(x, e, lo, hi):
    """Length of ``{x + s e}`` inside the box ``[lo, hi]`` (``e`` unit)."""
    smin = np.full(x.shape[:-1], -np.inf)
    smax = np.full(x.shape[:-1], np.inf)
    empty = np.zeros(x.shape[:-1], dtype=bool)
    for a in range(x.shape[-1]):
        ea, xa = e[..., a], x[..., a]
        par = np.abs(ea) < 1e-15
        with np.errstate(divide="ignore", invalid="ignore"):
            s1 = (lo[a] - xa) / ea
            s2 = (hi[a] - xa) / ea
        smin = np.where(par, smin, np.maximum(smin, np.minimum(s1, s2)))
        smax = np.where(par, smax, np.minimum(smax, np.maximum(s1, s2)))
        empty |= par & ((xa < lo[a]) | (xa > hi[a]))
    return np.where(empty, 0.0, np.maximum(smax - smin, 0.0))


def hyperplane_integral_analytic(model: DensityModel, x, p):
    """Exact measure of ``{(y - x) . p = 0}`` intersected with the indicator set."""
    x = np.asarray(x, dtype=float)
    u = _unit(p)
    x, u = np.broadcast_arrays(x, u)
    d = model.dim
    kind = model.kind
    if kind in ("indicator_circle", "indicator_donut"):
        s = np.abs(((np.array(model.center) - x) * u).sum(axis=-1))
        val = _ball_section(d, model.radius, s)
        if kind == "indicator_donut":
            val = val - _ball_section(d, model.inner_radius, s)
        return val
    if kind == "indicator_two_balls":
        val = 0.0
        for c in model.centers:
            s = np.abs(((np.array(c) - x) * u).sum(axis=-1))
            val = val + _ball_section(d, model.radius, s)
        return val
    if d != 2:
        raise DensityError(f"no closed-form hyperplane integral for {kind} in {d}D")
    e = np.stack([-u[..., 1], u[..., 0]], axis=-1)
    if kind == "indicator_square":
        return _slab_chord(x, e, np.array(model.lo), np.array(model.hi))
    if kind == "indicator_ellipse":
        rot = _rotation(model.angle)
        a, b = model.semi_axes
        z = (x - np.array(model.center)) @ rot
        ez = e @ rot
        # |z + s ez|^2 in the ellipse metric is a quadratic in s
        qa = (ez[..., 0] / a) ** 2 + (ez[..., 1] / b) ** 2
        qb = 2 * (z[..., 0] * ez[..., 0] / a**2 + z[..., 1] * ez[..., 1] / b**2)
        qc = (z[..., 0] / a) ** 2 + (z[..., 1] / b) ** 2 - 1.0
        disc = np.maximum(qb * qb - 4 * qa * qc, 0.0)
        return np.sqrt(disc) / qa
    raise DensityError(f"no closed-form hyperplane integral for {kind}")


def line_points(x0, q, lo, hi):
    """Points ``x0 + k q`` (integer k) inside ``[lo, hi]``; ``x0`` is ``(m, 2)``."""
    qn = np.linalg.norm(q)
    kmax = int(np.ceil(np.linalg.norm(np.asarray(hi) - np.asarray(lo)) / qn)) + 1
    ks = np.arange(-kmax, kmax + 1)
    pts = x0[:, None, :] + ks[None, :, None] * np.asarray(q)[None, None, :]
    tol = 1e-12
    inside = np.all((pts >= np.asarray(lo) - tol) & (pts <= np.asarray(hi) + tol), axis=2)
    return pts, inside


def line_integral_grid(model: DensityModel, cloud, node, p):
    """Riemann sum of the density along the grid line through ``node`` normal to ``p``.

    The line is walked with step ``q = p_perp`` (same length as ``p``), so for
    lattice directions it visits exactly the lattice points on that line.
    Off-lattice steps (interpolated ring stencils) evaluate the model at the
    visited points.  ``node`` may be an index array and ``p`` a matching
    ``(m, 2)`` array.
    """
    if not getattr(cloud, "is_grid", False) or cloud.dim != 2:
        raise DensityError("line_integral_grid needs a 2D grid cloud")
    nodes = np.atleast_1d(node)
    p = np.asarray(p, dtype=float)
    scalar = np.ndim(node) == 0
    pp = np.broadcast_to(p, (len(nodes), 2))
    out = np.empty(len(nodes))
    uniq, inv = np.unique(np.round(pp, 15), axis=0, return_inverse=True)
    inv = np.ravel(inv)
    for g, pv in enumerate(uniq):
        sel = np.flatnonzero(inv == g)
        q = np.array([-pv[1], pv[0]])
        pts, inside = line_points(cloud.points[nodes[sel]], q, (0.0, 0.0), (1.0, 1.0))
        rho = density_at(model, pts) * inside
        out[sel] = rho.sum(axis=1) * np.linalg.norm(q)
    return float(out[0]) if scalar else out


def hyperplane_integral_mc(model: DensityModel, x, p, seed=0, n_samples=None, sigma=None):
    """Monte-Carlo estimate of the Gaussian-weighted hyperplane integral.

    Averages the density over ``N`` draws from an isotropic Gaussian of width
    ``sigma`` centred at ``x`` and projected onto ``{(y - x) . p = 0}``.
    """
    x = np.asarray(x, dtype=float)
    u = _unit(p)
    n = model.n_mc if n_samples is None else int(n_samples)
    sig = model.sigma if sigma is None else float(sigma)
    if sig is None:
        raise DensityError("Monte-Carlo estimator needs sigma")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, len(x))) * sig
    z -= np.outer(z @ u, u)
    return float(density_at(model, x + z).mean())


def hyperplane_integral_mc_batch(model: DensityModel, xs, ps, seed=0, n_samples=None, sigma=None):
    """Vectorized :func:`hyperplane_integral_mc` over rows of ``xs``/``ps``.

    Row ``i`` uses the seed sequence ``(seed, i)`` so results do not depend on
    batching.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ps = np.broadcast_to(np.asarray(ps, dtype=float), xs.shape)
    return np.array([hyperplane_integral_mc(model, xs[i], ps[i], seed=(seed, i),
                                            n_samples=n_samples, sigma=sigma)
                     for i in range(len(xs))])


def sample_density(model: DensityModel, n: int, seed=0):
    """``n`` uniform samples on an indicator set by rejection from its bounding box."""
    if not model.is_indicator:
        raise DensityError("sample_density needs an indicator density")
    rng = np.random.default_rng(seed)
    lo, hi = model.bounding_box()
    pilot = rng.uniform(lo, hi, size=(4096, model.dim))
    rate = density_at(model, pilot).mean()
    if rate < 1e-4:
        raise DensityError(f"rejection acceptance rate {rate:.2e} too low")
    out = []
    have = 0
    while have < n:
        batch = rng.uniform(lo, hi, size=(int(1.2 * (n - have) / rate) + 64, model.dim))
        keep = batch[density_at(model, batch) > 0]
        out.append(keep)
        have += len(keep)
    return np.concatenate(out)[:n]
