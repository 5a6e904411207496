"""Reference solutions and error metrics.

Tukey depth by brute force over directions with exact halfspace masses,
distance functions to the indicator shapes, and the radially symmetric
curvature-flow profile.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .density import DensityModel, _rotation
from .geometry import PointCloud, sphere_directions


class OracleError(ValueError):
    pass


@dataclass
class OracleResult:
    values: np.ndarray
    method: str
    params: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# halfspace masses
# ---------------------------------------------------------------------------


def _disk_segment(radius, tau):
    """Area of ``{z in B(0, R): z . e >= tau}`` for a unit ``e``."""
    t = np.clip(tau / radius, -1.0, 1.0)
    return radius**2 * (np.arccos(t) - t * np.sqrt(1.0 - t * t))


def _ball_cap(radius, tau):
    t = np.clip(tau, -radius, radius)
    return np.pi * (radius - t) ** 2 * (2 * radius + t) / 3.0


def _ball_part(d, radius, tau):
    if d == 2:
        return _disk_segment(radius, tau)
    if d == 3:
        return _ball_cap(radius, tau)
    raise OracleError(f"ball halfspace mass only implemented for d in (2, 3), got {d}")


def _box_halfplane_area(lo, hi, x, v):
    """Area of ``{y in box: (y - x) . v >= 0}`` in 2D.

    Green's theorem with the origin placed at ``x`` on the cutting line: the
    chord contributes nothing, so only the kept pieces of the box edges count.
    """
    corners = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
    rel = corners[None, None] - x[:, None, None, :]  # (m, 1, 4, 2)
    f = np.einsum("mzcd,vd->mvc", rel, v)  # (m, V, 4)
    rel = np.broadcast_to(rel, f.shape + (2,))
    area = np.zeros(f.shape[:2])
    for e in range(4):
        a, b = rel[:, :, e], rel[:, :, (e + 1) % 4]
        fa, fb = f[:, :, e], f[:, :, (e + 1) % 4]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(fa != fb, fa / (fa - fb), 0.0)
        cut = a + s[..., None] * (b - a)
        p = np.where((fa >= 0)[..., None], a, cut)
        q = np.where((fb >= 0)[..., None], b, cut)
        keep = (fa >= 0) | (fb >= 0)
        cross = p[..., 0] * q[..., 1] - p[..., 1] * q[..., 0]
        area += np.where(keep, 0.5 * cross, 0.0)
    return area


def halfspace_mass(model: DensityModel, x, v):
    """Mass of ``{y: (y - x) . v >= 0}`` under an indicator density.

    ``x`` is ``(m, d)``, ``v`` is ``(V, d)``; returns ``(m, V)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    v = v / np.linalg.norm(v, axis=1, keepdims=True)
    d = model.dim
    kind = model.kind
    if kind in ("indicator_circle", "indicator_donut"):
        tau = (x - np.array(model.center)) @ v.T
        out = _ball_part(d, model.radius, tau)
        if kind == "indicator_donut":
            out = out - _ball_part(d, model.inner_radius, tau)
        return out
    if kind == "indicator_two_balls":
        return sum(_ball_part(d, model.radius, (x - np.array(c)) @ v.T) for c in model.centers)
    if kind == "indicator_ellipse":
        axes = np.array(model.semi_axes)
        # affine image of the unit ball: y = c + R diag(axes) z
        w = (v @ _rotation(model.angle, d)) * axes  # (V, d)
        tau = ((x - np.array(model.center)) @ v.T) / np.linalg.norm(w, axis=1)
        return float(np.prod(axes)) * _ball_part(d, 1.0, tau)
    if kind == "indicator_square":
        if d != 2:
            raise OracleError("box halfspace mass only implemented in 2D")
        return _box_halfplane_area(np.array(model.lo), np.array(model.hi), x, v)
    raise OracleError(f"no halfspace mass for {kind}")


def brute_tukey_depth(model: DensityModel, x, n_dirs: int = 8192, chunk: int = 256):
    """``min_v mass{(y - x) . v >= 0}`` over ``n_dirs`` quasi-uniform directions.

    ``x`` may be a single point or ``(m, d)``.  Directions are nested under
    doubling, so refining never increases the result.
    """
    xs = np.asarray(x, dtype=float)
    single = xs.ndim == 1
    xs = np.atleast_2d(xs)
    v = sphere_directions(model.dim, int(n_dirs))
    out = np.empty(len(xs))
    for s in range(0, len(xs), chunk):
        out[s : s + chunk] = halfspace_mass(model, xs[s : s + chunk], v).min(axis=1)
    out = np.maximum(out, 0.0)
    return float(out[0]) if single else out


def tukey_depth_field(model: DensityModel, cloud: PointCloud, n_dirs: int = 8192) -> OracleResult:
    vals = brute_tukey_depth(model, cloud.points, n_dirs)
    return OracleResult(vals, "brute_tukey", {"n_dirs": int(n_dirs)})


# ---------------------------------------------------------------------------
# distance fields
# ---------------------------------------------------------------------------


def _ellipse_inside_distance(z, a, b, iters=200):
    """Distance from points ``z`` inside the ellipse ``(x/a)^2 + (y/b)^2 <= 1`` to its boundary.

    The nearest point is ``(a^2 z0 / (t + a^2), b^2 z1 / (t + b^2))`` with
    ``t`` in ``(-b^2, 0]`` the root of a decreasing function, found by
    bisection (``a >= b`` after a swap).
    """
    if a < b:
        return _ellipse_inside_distance(z[:, ::-1], b, a, iters)
    z0, z1 = np.abs(z[:, 0]), np.abs(z[:, 1])
    lo = np.full(len(z), -b * b)
    hi = np.zeros(len(z))
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            g = (a * z0 / (mid + a * a)) ** 2 + (b * z1 / (mid + b * b)) ** 2 - 1.0
            lo = np.where(g > 0, mid, lo)
            hi = np.where(g > 0, hi, mid)
    t = hi
    xs = a * a * z0 / (t + a * a)
    # near t = -b^2 (points on or close to the major axis) the y formula is 0/0;
    # recover y from the ellipse equation instead
    near = (t + b * b) <= 1e-3 * b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        ys = np.where(near, b * np.sqrt(np.maximum(1.0 - (xs / a) ** 2, 0.0)), b * b * z1 / (t + b * b))
    dist = np.hypot(z0 - xs, z1 - ys)
    return dist


def exact_distance_field(model: DensityModel, points) -> OracleResult:
    """Distance to the boundary of the indicator set, zero outside it."""
    if isinstance(points, PointCloud):
        points = points.points
    x = np.atleast_2d(np.asarray(points, dtype=float))
    kind = model.kind
    if kind == "indicator_square":
        lo, hi = np.array(model.lo), np.array(model.hi)
        vals = np.minimum(x - lo, hi - x).min(axis=1)
    elif kind == "indicator_circle":
        vals = model.radius - np.linalg.norm(x - np.array(model.center), axis=1)
    elif kind == "indicator_donut":
        r = np.linalg.norm(x - np.array(model.center), axis=1)
        vals = np.minimum(r - model.inner_radius, model.radius - r)
    elif kind == "indicator_two_balls":
        vals = np.max([model.radius - np.linalg.norm(x - np.array(c), axis=1) for c in model.centers], axis=0)
    elif kind == "indicator_ellipse":
        if model.dim != 2:
            raise OracleError("ellipse distance only implemented in 2D")
        a, b = model.semi_axes
        z = (x - np.array(model.center)) @ _rotation(model.angle)
        inside = (z[:, 0] / a) ** 2 + (z[:, 1] / b) ** 2 <= 1.0
        vals = np.where(inside, _ellipse_inside_distance(z, a, b), 0.0)
    else:
        raise OracleError(f"no distance field for {kind}")
    return OracleResult(np.maximum(vals, 0.0), "exact_distance", {"shape": kind})


# ---------------------------------------------------------------------------
# metrics and profiles
# ---------------------------------------------------------------------------


def l1_error(a, b) -> float:
    """``(1/n) sum |a - b|``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise OracleError(f"field shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def linf_error(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise OracleError(f"field shapes differ: {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b)))


def radial_mcm_profile(R0: float, f: float, alpha: float = 1.0, dim: int = 2, n: int = 10**6):
    """Radially symmetric solution of ``|grad u| kappa_+^alpha = f`` on the ball of radius ``R0``.

    A sphere of radius ``r`` has curvature ``(dim - 1) / r``, so the profile
    solves ``-u'(r) = f (r / (dim - 1))^alpha`` with ``u(R0) = 0``.  The ODE is
    integrated by the trapezoid rule on ``n`` points and the returned callable
    interpolates that table.
    """
    if R0 <= 0 or f <= 0:
        raise OracleError("R0 and f must be positive")
    r = np.linspace(0.0, R0, int(n))
    slope = f * (r / (dim - 1)) ** alpha
    # integrate from R0 inwards: u(r) = int_r^R0 slope
    tail = cumulative_trapezoid(slope[::-1], r[::-1] * -1.0, initial=0.0)[::-1]

    def profile(radius):
        radius = np.asarray(radius, dtype=float)
        return np.interp(radius, r, tail, right=0.0)

    profile.table = (r, tail)
    return profile
