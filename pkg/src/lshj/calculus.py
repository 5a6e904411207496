"""Monotone difference primitives and the discrete subdifferential.

The per-node functions here are the readable definitions.  The solver works
on whole sweeps through :func:`candidate_thresholds`, which rewrites the
membership test as ``t >= threshold[j]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .geometry import GeometryError, PointCloud, Stencil


class CalculusError(ValueError):
    pass


@dataclass(frozen=True)
class SubdifferentialSet:
    """Members ``(j, p)`` at a fixed node, with ``p = -displacement[j]``."""

    node: int
    members: Tuple[Tuple[int, Tuple[float, ...]], ...]

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    @property
    def indices(self):
        return [j for j, _ in self.members]

    @property
    def vectors(self):
        if not self.members:
            return np.empty((0, 0))
        return np.array([p for _, p in self.members])


def _check_interior(cloud: PointCloud, node: int):
    if cloud.boundary_mask[node]:
        raise CalculusError(f"node {node} is a boundary node")


def subdifferential(cloud: PointCloud, field, t: float, node: int) -> SubdifferentialSet:
    """Directions ``p = -v_j`` whose open back halfspace holds no neighbor above ``t``.

    ``p . (y - x) < 0  =>  u(y) <= t`` for every neighbor ``y``; a zero dot
    product imposes nothing.
    """
    _check_interior(cloud, node)
    vals = cloud.neighbor_values(np.asarray(field, dtype=float), [node])[0]
    pos = cloud.positive_dot_for(node)
    disp = cloud.displacements[node]
    members = []
    for j in range(len(disp)):
        # p . v_i < 0  <=>  v_j . v_i > 0
        if np.all(vals[pos[j]] <= t):
            members.append((j, tuple(-disp[j])))
    return SubdifferentialSet(node=node, members=tuple(members))


def candidate_thresholds(values, positive_dot, chunk=2048):
    """Smallest ``t`` at which each candidate joins the subdifferential.

    ``values`` is ``(m, K)`` neighbor values; ``positive_dot`` is ``(K, K)`` or
    ``(m, K, K)``.  Returns ``(m, K)`` with ``out[n, j] = max_{i: D[j,i]} values[n, i]``.
    """
    m, k = values.shape
    out = np.empty((m, k))
    if positive_dot.ndim == 2:
        for j in range(k):
            out[:, j] = values[:, positive_dot[j]].max(axis=1)
        return out
    for s in range(0, m, chunk):
        v = values[s : s + chunk]
        masked = np.where(positive_dot[s : s + chunk], v[:, None, :], -np.inf)
        out[s : s + chunk] = masked.max(axis=2)
    return out


def directional_gradient(cloud: PointCloud, field, t: float, node: int, j: int) -> float:
    """Backward difference ``(t - u(x - p)) / |p|`` for member ``p = -v_j``."""
    vals = cloud.neighbor_values(np.asarray(field, dtype=float), [node])[0]
    return float((t - vals[j]) / np.linalg.norm(cloud.displacements[node, j]))


def _offset_index(cloud: PointCloud, node: int, q):
    j = cloud.displacement_index(node, q)
    if j is None:
        raise CalculusError(f"offset {tuple(np.round(q, 12))} not in the stencil at node {node}")
    return j


def second_difference(cloud: PointCloud, field, t: float, node: int, q) -> float:
    """``(u(x+q) - 2t + u(x-q)) / |q|^2``; both ``x+q`` and ``x-q`` must be stencil points."""
    q = np.asarray(q, dtype=float)
    jp = _offset_index(cloud, node, q)
    jm = _offset_index(cloud, node, -q)
    vals = cloud.neighbor_values(np.asarray(field, dtype=float), [node])[0]
    return float((vals[jp] - 2.0 * t + vals[jm]) / (q @ q))


def perp_2d(p, stencil: Stencil = None):
    """Rotate a 2-vector by +90 degrees, ``(-p2, p1)``.

    With ``stencil`` given (grid-index units), also checks the result is an
    offset of that stencil.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (2,):
        raise CalculusError("perp_2d needs a 2-vector")
    q = np.array([-p[1], p[0]])
    if stencil is not None and stencil.index_of(q) is None:
        raise CalculusError(f"perpendicular {tuple(q)} missing from stencil (non-symmetric stencil?)")
    return q


def orthonormal_pairs_3d(p, offsets, tol=1e-12) -> List[tuple]:
    """All unordered offset pairs ``(v1, v2)`` with ``v1, v2, p`` mutually orthogonal.

    ``offsets`` is a :class:`Stencil` or a ``(K, 3)`` array.  Entries are
    ``(v1, v2, |v1|, |v2|)`` in lexicographic order of offset indices.
    """
    off = offsets.offsets if isinstance(offsets, Stencil) else np.asarray(offsets, dtype=float)
    return [(off[a], off[b], float(np.linalg.norm(off[a])), float(np.linalg.norm(off[b])))
            for a, b in orthonormal_pair_indices(p, off, tol)]


def orthonormal_pair_indices(p, offsets, tol=1e-12):
    p = np.asarray(p, dtype=float)
    if p.shape != (3,):
        raise CalculusError("orthonormal_pairs_3d needs a 3-vector")
    off = np.asarray(offsets, dtype=float)
    unit = off / np.linalg.norm(off, axis=1, keepdims=True)
    pu = p / np.linalg.norm(p)
    perp = np.flatnonzero(np.abs(unit @ pu) <= tol)
    if len(perp) < 2:
        return []
    g = np.abs(unit[perp] @ unit[perp].T) <= tol
    a, b = np.nonzero(np.triu(g, 1))
    return [(int(perp[i]), int(perp[k])) for i, k in zip(a, b)]


def quasiconcavity_gap(hessian, p) -> float:
    """Largest eigenvalue of ``hessian`` restricted to the complement of ``p``.

    Non-positive values are the second-order test for quasiconcavity.
    """
    X = np.asarray(hessian, dtype=float)
    p = np.asarray(p, dtype=float)
    npn = np.linalg.norm(p)
    if npn == 0:
        raise CalculusError("p must be nonzero")
    d = len(p)
    # columns 1.. of a Householder-type QR basis span p's complement
    q, _ = np.linalg.qr(np.column_stack([p / npn, np.eye(d)]))
    basis = q[:, 1:d]
    block = basis.T @ (0.5 * (X + X.T)) @ basis
    return float(np.linalg.eigvalsh(block)[-1])
