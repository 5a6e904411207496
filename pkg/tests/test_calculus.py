import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import null_space

from lshj.calculus import (CalculusError, candidate_thresholds, directional_gradient,
                           orthonormal_pairs_3d, perp_2d, quasiconcavity_gap, second_difference,
                           subdifferential)
from lshj.geometry import Stencil, build_grid_cloud


def brute_members(cloud, u, t, node):
    """Exhaustive double loop over (candidate, neighbor) pairs."""
    disp = cloud.displacements[node]
    vals = cloud.neighbor_values(u, [node])[0]
    out = []
    for j in range(len(disp)):
        p = -disp[j]
        if all(not (p @ disp[i] < 0) or vals[i] <= t for i in range(len(disp))):
            out.append(j)
    return out


def test_constant_field_every_direction_is_member(grid9):
    u = np.full(grid9.n, 2.0)
    node = grid9.interior[0]
    assert len(subdifferential(grid9, u, 2.0, node)) == 8
    assert len(subdifferential(grid9, u, 1.999, node)) == 0


def test_linear_field_members(grid9):
    u = grid9.points[:, 0].copy()
    node = int(grid9.interior[20])
    t = u[node]
    members = {tuple(np.round(np.array(p) / grid9.h).astype(int)) for _, p in subdifferential(grid9, u, t, node)}
    # p = (1, 0) looks back at x - p, which is lower; its halfspace holds only lower points
    assert (1, 0) in members
    # p = (-1, 0) has the higher neighbors behind it
    assert (-1, 0) not in members
    assert all(p[0] >= 0 for p in members)


def test_membership_matches_double_loop(grid25):
    rng = np.random.default_rng(3)
    for _ in range(300):
        u = rng.standard_normal(grid25.n)
        node = int(rng.choice(grid25.interior))
        t = float(rng.normal())
        got = subdifferential(grid25, u, t, node).indices
        assert got == brute_members(grid25, u, t, node)


def test_membership_on_knn_cloud(knn2d):
    rng = np.random.default_rng(4)
    for _ in range(200):
        u = rng.standard_normal(knn2d.n)
        node = int(rng.choice(knn2d.interior))
        t = float(rng.normal(scale=0.5))
        assert subdifferential(knn2d, u, t, node).indices == brute_members(knn2d, u, t, node)


def test_thresholds_agree_with_membership(grid25):
    rng = np.random.default_rng(5)
    u = rng.standard_normal(grid25.n)
    nodes = grid25.interior[:40]
    thr = candidate_thresholds(grid25.neighbor_values(u, nodes), grid25.positive_dot_for(nodes))
    for row, node in enumerate(nodes):
        for t in np.unique(thr[row]):
            got = set(subdifferential(grid25, u, t, node).indices)
            assert got == set(np.flatnonzero(thr[row] <= t))


def test_boundary_node_rejected(grid9):
    with pytest.raises(CalculusError):
        subdifferential(grid9, np.zeros(grid9.n), 0.0, 0)


_GRID = build_grid_cloud((11, 11), Stencil.wide(5))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-2, 2), st.floats(0, 2))
def test_set_monotone_in_field_and_t(seed, t, dt):
    """u <= v shrinks nothing: P(u, t) contains P(v, t); raising t only adds members."""
    cloud = _GRID
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(cloud.n)
    v = u + rng.uniform(0, 1, cloud.n)
    node = int(rng.choice(cloud.interior))
    pu = set(subdifferential(cloud, u, t, node).indices)
    pv = set(subdifferential(cloud, v, t, node).indices)
    assert pv <= pu
    assert pu <= set(subdifferential(cloud, u, t + dt, node).indices)


def test_nonempty_for_quasiconcave_fields(grid49):
    """A concave field always admits a member at t = u(x) on symmetric stencils."""
    c = np.array([0.37, 0.61])
    u = 1.0 - ((grid49.points - c) ** 2).sum(axis=1)
    for node in grid49.interior:
        assert len(subdifferential(grid49, u, u[node], node)) > 0


def test_directional_gradient_exact_on_linear(grid49):
    a = np.array([0.7, -1.3])
    u = 0.2 + grid49.points @ a
    node = int(grid49.interior[50])
    for j, v in enumerate(grid49.displacements[node]):
        p = -v
        expect = a @ p / np.linalg.norm(p)
        assert directional_gradient(grid49, u, u[node], node, j) == pytest.approx(expect, abs=1e-12)


def test_second_difference_exact_on_quadratic(grid49):
    A = np.array([[1.5, -0.4], [-0.4, 0.8]])
    x = grid49.points
    u = 0.5 * np.einsum("ni,ij,nj->n", x, A, x) + x @ [0.3, -0.2]
    node = int(grid49.interior[77])
    for q in grid49.displacements[node]:
        expect = q @ A @ q / (q @ q)
        assert second_difference(grid49, u, u[node], node, q) == pytest.approx(expect, abs=1e-9)


def test_second_difference_missing_offset(grid9):
    node = int(grid9.interior[0])
    with pytest.raises(CalculusError):
        second_difference(grid9, np.zeros(grid9.n), 0.0, node, [2 * grid9.h, 0.0])


def test_perp_2d_examples():
    np.testing.assert_array_equal(perp_2d([1, 0]), [0, 1])
    np.testing.assert_array_equal(perp_2d([2, 1]), [-1, 2])
    assert perp_2d([3, -2]) @ np.array([3, -2]) == 0
    np.testing.assert_array_equal(perp_2d([2, 1], Stencil.wide(5)), [-1, 2])
    with pytest.raises(CalculusError):
        perp_2d([1, 0], Stencil(offsets=np.array([[1.0, 0.0], [-1.0, 0.0]]), kind="grid_wide"))
    with pytest.raises(CalculusError):
        perp_2d([1, 0, 0])


def _brute_pairs(p, offsets):
    p = np.asarray(p, dtype=float)
    out = set()
    for a, b in itertools.combinations(range(len(offsets)), 2):
        va, vb = offsets[a], offsets[b]
        if va @ p == 0 and vb @ p == 0 and va @ vb == 0:
            out.add((a, b))
    return out


def _pair_set(p, st_):
    return {(st_.index_of(a), st_.index_of(b)) for a, b, _, _ in orthonormal_pairs_3d(p, st_)}


def test_pairs_axis_on_3cube():
    st_ = Stencil.wide(3, dim=3)
    pairs = orthonormal_pairs_3d([0, 0, 1], st_)
    as_tuples = {frozenset((tuple(a.astype(int)), tuple(b.astype(int)))) for a, b, _, _ in pairs}
    assert frozenset({(1, 0, 0), (0, 1, 0)}) in as_tuples
    assert frozenset({(1, 1, 0), (1, -1, 0)}) in as_tuples
    assert _pair_set([0, 0, 1], st_) == _brute_pairs([0, 0, 1], st_.offsets)


def test_pairs_diagonal_on_5cube():
    st_ = Stencil.wide(5, dim=3)
    pairs = _pair_set([1, 1, 1], st_)
    assert (st_.index_of([-1, 1, 0]), st_.index_of([-1, -1, 2])) in pairs or \
        (st_.index_of([-1, -1, 2]), st_.index_of([-1, 1, 0])) in pairs
    assert pairs == _brute_pairs([1, 1, 1], st_.offsets)


def test_pairs_generic_on_7cube():
    st_ = Stencil.wide(7, dim=3)
    assert _pair_set([1, 2, 3], st_) == _brute_pairs([1, 2, 3], st_.offsets)
    # norms are reported with each pair
    for a, b, na, nb in orthonormal_pairs_3d([1, 2, 3], st_):
        assert na == pytest.approx(np.linalg.norm(a)) and nb == pytest.approx(np.linalg.norm(b))


def test_pairs_can_be_empty():
    assert orthonormal_pairs_3d([1, 2, 3], Stencil.wide(3, dim=3)) == []


def test_quasiconcavity_gap_examples():
    assert quasiconcavity_gap(-np.eye(2), [1, 0]) == pytest.approx(-1.0)
    assert quasiconcavity_gap(np.diag([5.0, -1.0]), [1, 0]) == pytest.approx(-1.0)
    assert quasiconcavity_gap(np.diag([-1.0, -2.0, 3.0]), [0, 0, 1]) == pytest.approx(-1.0)
    with pytest.raises(CalculusError):
        quasiconcavity_gap(np.eye(2), [0, 0])


def test_quasiconcavity_gap_matches_sampling():
    rng = np.random.default_rng(6)
    for _ in range(50):
        d = int(rng.integers(2, 5))
        A = rng.standard_normal((d, d))
        X = A + A.T
        p = rng.standard_normal(d)
        # sample unit vectors in the complement of p
        q = rng.standard_normal((200000, d))
        q -= np.outer(q @ p, p) / (p @ p)
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        sampled = np.einsum("ni,ij,nj->n", q, X, q).max()
        gap = quasiconcavity_gap(X, p)
        assert sampled <= gap + 1e-9
        if d == 2:
            assert gap == pytest.approx(sampled, abs=1e-9)


def test_quasiconcavity_gap_matches_eigen_oracle():
    rng = np.random.default_rng(7)
    for _ in range(200):
        d = int(rng.integers(2, 6))
        A = rng.standard_normal((d, d))
        p = rng.standard_normal(d)
        B = null_space(p[None, :])
        expect = np.linalg.eigvalsh(B.T @ (0.5 * (A + A.T)) @ B).max()
        assert quasiconcavity_gap(A, p) == pytest.approx(expect, abs=1e-6)
