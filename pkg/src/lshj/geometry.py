"""Discrete domains: point clouds, kNN graphs and Cartesian grids with stencils.

Every node of a :class:`PointCloud` carries ``K`` displacement vectors.  The
value of a field at the end of a displacement is a convex combination of at
most ``C`` node values (``C == 1`` except for interpolated ring stencils), so
all schemes read neighbor values through :meth:`PointCloud.neighbor_values`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree
from scipy.stats import norm, qmc


class GeometryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Domains and boundary specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Domain:
    """A box or a ball, used to mark the boundary band of a sampled cloud."""

    kind: str
    lo: Optional[tuple] = None
    hi: Optional[tuple] = None
    center: Optional[tuple] = None
    radius: Optional[float] = None

    @classmethod
    def box(cls, lo, hi):
        return cls("box", lo=tuple(map(float, lo)), hi=tuple(map(float, hi)))

    @classmethod
    def unit_box(cls, d):
        return cls.box([0.0] * d, [1.0] * d)

    @classmethod
    def ball(cls, center, radius):
        return cls("ball", center=tuple(map(float, center)), radius=float(radius))

    def boundary_distance(self, points):
        points = np.atleast_2d(points)
        if self.kind == "box":
            lo, hi = np.asarray(self.lo), np.asarray(self.hi)
            return np.minimum(points - lo, hi - points).min(axis=1)
        if self.kind == "ball":
            r = np.linalg.norm(points - np.asarray(self.center), axis=1)
            return np.abs(self.radius - r)
        raise GeometryError(f"unknown domain kind {self.kind!r}")


@dataclass(frozen=True)
class BoundarySpec:
    """Either an explicit boolean mask or a (domain, eps) band ``d(x, dOmega) < eps``.

    ``eps=None`` with a domain means ``eps = 2h``.
    """

    mask: Optional[np.ndarray] = None
    domain: Optional[Domain] = None
    eps: Optional[float] = None

    def resolve(self, points, h):
        n = len(points)
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != (n,):
                raise GeometryError(f"boundary mask has shape {mask.shape}, expected ({n},)")
            return mask.copy()
        if self.domain is not None:
            eps = 2.0 * h if self.eps is None else float(self.eps)
            return self.domain.boundary_distance(points) < eps
        return np.zeros(n, dtype=bool)


# ---------------------------------------------------------------------------
# Stencils
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Stencil:
    """Grid stencil in grid-index units.

    ``offsets`` is ``(K, d)``.  For ``interp_ring`` the offsets are real points
    on the boundary of the 3x3 cell block and ``corners``/``weights`` (both
    ``(K, 2, ...)``) give each as a convex combination of two integer offsets.
    """

    offsets: np.ndarray
    kind: str
    corners: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None

    @property
    def dim(self):
        return self.offsets.shape[1]

    def __len__(self):
        return len(self.offsets)

    @property
    def radius(self):
        """Largest offset extent along any axis, in cells."""
        if self.kind == "interp_ring":
            return 1
        return int(np.abs(self.offsets).max())

    @property
    def interp_weights(self):
        """Per-offset list of ``(corner_offset, weight)`` pairs."""
        if self.kind != "interp_ring":
            return [[(tuple(o), 1.0)] for o in self.offsets.astype(int)]
        out = []
        for c, w in zip(self.corners, self.weights):
            out.append([(tuple(ci), float(wi)) for ci, wi in zip(c, w) if wi > 0])
        return out

    def index_of(self, v, atol=1e-12):
        """Index of the offset equal to ``v`` or ``None``."""
        hit = np.flatnonzero(np.all(np.abs(self.offsets - np.asarray(v)) <= atol, axis=1))
        return int(hit[0]) if len(hit) else None

    def positive_dot(self):
        """``D[j, i] = offsets[j] . offsets[i] > 0``, evaluated without round-off."""
        if self.kind == "interp_ring":
            k = len(self.offsets)
            idx = np.arange(k)
            diff = np.abs(idx[:, None] - idx[None, :]) % k
            diff = np.minimum(diff, k - diff)
            return 4 * diff < k
        o = self.offsets.astype(np.int64)
        return o @ o.T > 0

    @classmethod
    def wide(cls, width: int, dim: int = 2, primitive_only: bool = False):
        """All nonzero integer offsets in the box ``[-(w-1)/2, (w-1)/2]^dim``."""
        if width < 3 or width % 2 == 0:
            raise GeometryError("stencil width must be odd and >= 3")
        r = (width - 1) // 2
        axes = [np.arange(-r, r + 1)] * dim
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
        grid = grid[np.any(grid != 0, axis=1)]
        if primitive_only:
            keep = [_gcd_all(v) == 1 for v in grid]
            grid = grid[np.asarray(keep)]
        return cls(offsets=grid.astype(float), kind="grid_wide")

    @classmethod
    def ring(cls, k: int, layout: str = "angle"):
        """``k`` directions ending on the boundary of the 3x3 block.

        ``layout="angle"`` spaces the directions equally in angle;
        ``layout="perimeter"`` spaces their end points equally along the square
        ``max(|x|, |y|) = 1``.  Each ring point is linearly interpolated from
        the two grid offsets bounding its edge segment.
        """
        if k < 4 or k % 4:
            raise GeometryError("ring stencils need k divisible by 4 (perpendiculars must exist)")
        if layout == "angle":
            theta = 2.0 * np.pi * np.arange(k) / k
            c, s = np.cos(theta), np.sin(theta)
            scale = np.maximum(np.abs(c), np.abs(s))
            pts = np.stack([c / scale, s / scale], axis=1)
        elif layout == "perimeter":
            # walk the square counter-clockwise from (1, 0); perimeter length 8
            a = 8.0 * np.arange(k) / k
            side = np.floor((a + 1.0) / 2.0).astype(int) % 4
            off = (a + 1.0) - 2.0 * np.floor((a + 1.0) / 2.0) - 1.0
            pts = np.empty((k, 2))
            for m, (sd, o) in enumerate(zip(side, off)):
                pts[m] = [(1.0, o), (-o, 1.0), (-1.0, -o), (o, -1.0)][sd]
        else:
            raise GeometryError(f"unknown ring layout {layout!r}")
        # snap round-off so that axis and diagonal points hit corners exactly
        pts = np.where(np.abs(pts - np.round(pts)) < 1e-12, np.round(pts), pts)
        pts = pts + 0.0  # drop negative zeros
        corners = np.zeros((k, 2, 2))
        weights = np.zeros((k, 2))
        for m, (x, y) in enumerate(pts):
            if abs(abs(x) - 1.0) < 1e-12:
                free, fixed = 1, 0
            else:
                free, fixed = 0, 1
            a = pts[m, free]
            lo, hi = np.floor(a), np.ceil(a)
            c0 = np.empty(2)
            c1 = np.empty(2)
            c0[fixed] = c1[fixed] = pts[m, fixed]
            c0[free], c1[free] = lo, hi
            if hi == lo:
                w0, w1 = 1.0, 0.0
            else:
                w1 = a - lo
                w0 = 1.0 - w1
            corners[m] = [c0, c1]
            weights[m] = [w0, w1]
        return cls(offsets=pts, kind="interp_ring", corners=corners, weights=weights)

    @classmethod
    def parse(cls, text: str, dim: int = 2):
        """``"7"`` -> 7x7 wide stencil; ``"ring:32"`` or ``"ring:32:perimeter"`` -> ring."""
        text = str(text).strip()
        if text.startswith("ring:"):
            parts = text.split(":")
            try:
                k = int(parts[1])
            except (IndexError, ValueError):
                raise GeometryError(f"bad ring stencil {text!r}") from None
            return cls.ring(k, *parts[2:3])
        if "x" in text:
            text = text.split("x")[0]
        try:
            width = int(text)
        except ValueError:
            raise GeometryError(f"bad stencil {text!r}") from None
        return cls.wide(width, dim)


def _gcd_all(v):
    g = 0
    for x in v:
        g = gcd(g, abs(int(x)))
    return g


# ---------------------------------------------------------------------------
# Point clouds
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class PointCloud:
    """The discrete domain.  Treat as immutable once built."""

    points: np.ndarray
    boundary_mask: np.ndarray
    displacements: np.ndarray  # (n, K, d) physical units
    interp_index: np.ndarray  # (n, K, C) node indices
    interp_weight: np.ndarray  # (n, K, C)
    positive_dot: np.ndarray  # (K, K) shared or (n, K, K)
    h: float
    dtheta_local: np.ndarray
    dtheta: float
    delta: float
    R: float
    kind: str = "knn"
    grid_dims: Optional[tuple] = None
    stencil: Optional[Stencil] = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.points)

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def n_neighbors(self):
        return self.displacements.shape[1]

    @property
    def interior(self):
        return np.flatnonzero(~self.boundary_mask)

    @property
    def neighbors(self):
        """``(n, K)`` neighbor node indices; ``None`` for interpolated stencils."""
        if self.interp_index.shape[2] != 1:
            return None
        return self.interp_index[:, :, 0]

    @property
    def is_grid(self):
        return self.kind == "grid"

    @property
    def uniform_stencil(self):
        return self.positive_dot.ndim == 2

    def neighbor_values(self, u, nodes=None):
        """Field values at the ends of every displacement, ``(m, K)``."""
        idx = self.interp_index if nodes is None else self.interp_index[nodes]
        w = self.interp_weight if nodes is None else self.interp_weight[nodes]
        if idx.shape[2] == 1:
            return u[idx[:, :, 0]]
        return np.einsum("mkc,mkc->mk", w, u[idx])

    def positive_dot_for(self, nodes):
        if self.uniform_stencil:
            return self.positive_dot
        return self.positive_dot[nodes]

    def displacement_index(self, node, v, atol=1e-12):
        """Index ``j`` with ``displacements[node, j] == v`` or ``None``."""
        disp = self.displacements[node]
        scale = max(1.0, float(np.abs(disp).max()))
        hit = np.flatnonzero(np.all(np.abs(disp - np.asarray(v)) <= atol * scale, axis=1))
        return int(hit[0]) if len(hit) else None


def angle(p, q) -> float:
    """Angle between two nonzero vectors, in ``[0, pi]``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    npn, nqn = np.linalg.norm(p), np.linalg.norm(q)
    if npn == 0 or nqn == 0:
        raise GeometryError("angle undefined for a zero vector")
    # half-angle form keeps full precision near 0 and pi, unlike arccos
    a, b = p / npn, q / nqn
    return float(2.0 * np.arctan2(np.linalg.norm(a - b), np.linalg.norm(a + b)))


def sphere_directions(d: int, n: int) -> np.ndarray:
    """Deterministic quasi-uniform unit vectors.

    In 2D these are the angles ``2 pi m / n``; in higher dimensions a prefix of
    an unscrambled Halton sequence pushed through the normal quantile.  Both
    families are nested when ``n`` doubles.
    """
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        t = 2.0 * np.pi * np.arange(n) / n
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    sampler = qmc.Halton(d, scramble=False)
    sampler.fast_forward(1)
    z = norm.ppf(sampler.random(n))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def default_probe_count(d):
    return 2**12 if d <= 3 else 2**14


def _dtheta_exact_2d(disp):
    """Half the largest angular gap between displacement directions, per node."""
    ang = np.sort(np.arctan2(disp[..., 1], disp[..., 0]), axis=-1)
    gaps = np.diff(ang, axis=-1)
    wrap = ang[..., :1] + 2 * np.pi - ang[..., -1:]
    return 0.5 * np.concatenate([gaps, wrap], axis=-1).max(axis=-1)


def _dtheta_probe(disp, n_probe, chunk=64):
    d = disp.shape[-1]
    probes = sphere_directions(d, n_probe)
    unit = disp / np.linalg.norm(disp, axis=-1, keepdims=True)
    out = np.empty(len(unit))
    for s in range(0, len(unit), chunk):
        cos = np.einsum("pd,mkd->mpk", probes, unit[s : s + chunk])
        out[s : s + chunk] = np.arccos(np.clip(cos.max(axis=2), -1.0, 1.0)).max(axis=1)
    return out


def directional_resolution(cloud: PointCloud, node: int, n_probe: Optional[int] = None) -> float:
    """``max_{|p|=1} min_{q in V(x)} w(p, q)`` estimated from ``n_probe`` probes."""
    disp = cloud.displacements[node]
    if disp.size == 0:
        raise GeometryError("node has no displacements")
    n_probe = default_probe_count(cloud.dim) if n_probe is None else int(n_probe)
    if n_probe < 1:
        raise GeometryError("n_probe must be >= 1")
    return float(_dtheta_probe(disp[None], n_probe)[0])


def _dtheta_exact_3d(disp, n_probe=None):
    """Largest empty spherical cap per node, from the convex hull of the unit directions.

    The boundary circle of a maximal empty cap passes through hull vertices
    and lies in the plane of a hull facet, so the cap around facet normal
    ``n`` (offset ``b``) has angular radius ``arccos(b)``.  Degenerate hulls
    fall back to probing.
    """
    unit = disp / np.linalg.norm(disp, axis=-1, keepdims=True)
    out = np.empty(len(unit))
    for i, u in enumerate(unit):
        try:
            eq = ConvexHull(u).equations
        except QhullError:
            out[i] = _dtheta_probe(disp[i : i + 1], n_probe or default_probe_count(3))[0]
            continue
        out[i] = np.arccos(np.clip(-eq[:, 3], -1.0, 1.0)).max()
    return out


def _local_dtheta(disp, n_probe=None):
    if disp.shape[-1] == 2:
        return _dtheta_exact_2d(disp)
    if disp.shape[-1] == 3:
        return _dtheta_exact_3d(disp, n_probe)
    n_probe = default_probe_count(disp.shape[-1]) if n_probe is None else n_probe
    return _dtheta_probe(disp, n_probe)


def spatial_resolution(points) -> float:
    """``max_x min_{y != x} |x - y|``; rejects duplicate points."""
    tree = cKDTree(points)
    dist, _ = tree.query(points, k=2)
    nn = dist[:, 1]
    if np.any(nn == 0):
        raise GeometryError("duplicate points in cloud")
    return float(nn.max())


def build_knn_cloud(points, k: int, boundary: Optional[BoundarySpec] = None,
                    n_probe: Optional[int] = None) -> PointCloud:
    """k-nearest-neighbor graph over ``points`` (self excluded, no symmetrization)."""
    points = np.ascontiguousarray(points, dtype=float)
    if points.ndim != 2:
        raise GeometryError("points must be an (n, d) array")
    n, d = points.shape
    k = int(k)
    if k < 1 or k >= n:
        raise GeometryError(f"need 1 <= k < n, got k={k}, n={n}")
    tree = cKDTree(points)
    dist, idx = tree.query(points, k=k + 1)
    if np.any(dist[:, 1] == 0):
        raise GeometryError("duplicate points in cloud")
    # the query returns self first except under exact ties at distance 0 (excluded above)
    nbr = idx[:, 1:]
    h = float(dist[:, 1].max())
    disp = points[nbr] - points[:, None, :]
    mask = (boundary or BoundarySpec()).resolve(points, h)
    dtl = _local_dtheta(disp, n_probe)
    norms = np.linalg.norm(disp, axis=2)
    pos = np.einsum("nkd,nld->nkl", disp, disp) > 0
    return PointCloud(
        points=points,
        boundary_mask=mask,
        displacements=disp,
        interp_index=nbr[:, :, None].copy(),
        interp_weight=np.ones((n, k, 1)),
        positive_dot=pos,
        h=h,
        dtheta_local=dtl,
        dtheta=float(dtl.max()),
        delta=float(norms.min()),
        R=float(norms.max()),
        kind="knn",
        meta={"k": k},
    )


def build_grid_cloud(dims: Sequence[int], stencil: Stencil,
                     boundary: Optional[BoundarySpec] = None) -> PointCloud:
    """Lattice of ``[0, 1]^d`` with ``dims[i]`` nodes per axis.

    Nodes whose stencil would leave the lattice are marked boundary, together
    with any node flagged by ``boundary``.
    """
    dims = tuple(int(x) for x in dims)
    d = len(dims)
    if stencil.dim != d:
        raise GeometryError(f"stencil dimension {stencil.dim} != grid dimension {d}")
    if min(dims) < 3:
        raise GeometryError("grids need at least 3 nodes per axis")
    r = stencil.radius
    if min(dims) < 2 * r + 1:
        raise GeometryError("stencil wider than grid")
    spacing = np.array([1.0 / (m - 1) for m in dims])
    axes = [np.arange(m) for m in dims]
    ijk = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    points = ijk * spacing
    n = len(points)
    strides = np.array([int(np.prod(dims[i + 1:])) for i in range(d)])

    band = np.zeros(n, dtype=bool)
    for a in range(d):
        band |= (ijk[:, a] < r) | (ijk[:, a] > dims[a] - 1 - r)
    h = float(spacing.min())
    extra = (boundary or BoundarySpec()).resolve(points, h) if boundary is not None else False
    mask = band | extra

    if stencil.kind == "interp_ring":
        corner_off = stencil.corners.astype(int)  # (K, 2, d)
        cw = stencil.weights
    else:
        corner_off = stencil.offsets.astype(int)[:, None, :]
        cw = np.ones((len(stencil), 1))
    # boundary nodes keep in-range (clipped) indices that are never read by schemes
    tgt = ijk[:, None, None, :] + corner_off[None]
    tgt = np.clip(tgt, 0, np.array(dims) - 1)
    index = (tgt * strides).sum(axis=-1)
    weight = np.broadcast_to(cw, index.shape).copy()
    disp_one = stencil.offsets * spacing
    disp = np.broadcast_to(disp_one, (n,) + disp_one.shape).copy()

    dt_one = float(_local_dtheta(disp_one[None])[0])
    dtl = np.full(n, dt_one)
    norms = np.linalg.norm(disp_one, axis=1)
    return PointCloud(
        points=points,
        boundary_mask=mask,
        displacements=disp,
        interp_index=index,
        interp_weight=weight,
        positive_dot=stencil.positive_dot(),
        h=h,
        dtheta_local=dtl,
        dtheta=dt_one,
        delta=float(norms.min()),
        R=float(norms.max()),
        kind="grid",
        grid_dims=dims,
        stencil=stencil,
        meta={"stencil": stencil.kind, "stencil_size": len(stencil)},
    )


def grid_shape_values(cloud: PointCloud, u):
    """View a node field on a grid cloud as a ``dims``-shaped array."""
    if not cloud.is_grid:
        raise GeometryError("not a grid cloud")
    return np.asarray(u).reshape(cloud.grid_dims)
